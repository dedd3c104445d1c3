#include "hypercloud/setdist.hpp"

namespace hypercloud {

namespace {

// Row i selects row idx[i] of the matrix it multiplies.
Matrix selection(const std::vector<Index>& idx, Index cols) {
  Matrix s = Matrix::Zero(static_cast<Index>(idx.size()), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) s(static_cast<Index>(i), idx[i]) = 1.0;
  return s;
}

Var squared_residual(Var a, Var gathered) {
  Var d = a - gathered;
  return sum(cwise_mul(d, d));
}

}  // namespace

Var chamfer(Var x1, Var x2) {
  detail::require_clouds(x1.value(), x2.value(), "chamfer");
  Tape& t = *x1.tape;
  const auto nn12 = nearest_indices(x1.value(), x2.value());
  const auto nn21 = nearest_indices(x2.value(), x1.value());
  Var s12{&t, t.constant(selection(nn12, x2.rows()))};
  Var s21{&t, t.constant(selection(nn21, x1.rows()))};
  return squared_residual(x1, matmul(s12, x2)) + squared_residual(x2, matmul(s21, x1));
}

Var emd(Var x1, Var x2) {
  const auto m = emd_exact(x1.value(), x2.value());
  Tape& t = *x1.tape;
  Var p{&t, t.constant(selection(m.perm, x2.rows()))};
  return scale(squared_residual(x1, matmul(p, x2)), 0.5);
}

}  // namespace hypercloud
