#include "hypercloud/model.hpp"

#include "hypercloud/setdist.hpp"

#include <algorithm>
#include <cmath>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <numeric>
#include <optional>

namespace hypercloud {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Linear zero_linear(int in, int out) { return {Matrix::Zero(in, out), Matrix::Zero(1, out)}; }

std::vector<Linear> zero_stack(const std::vector<int>& widths) {
  std::vector<Linear> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    layers.push_back(zero_linear(widths[k], widths[k + 1]));
  }
  return layers;
}

void init_uniform(Linear& layer, double bound, Rng& rng) {
  for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
  for (Index i = 0; i < layer.bias.size(); ++i) layer.bias.data()[i] = rng.uniform(-bound, bound);
}

double fan_in_bound(const Linear& layer) {
  return 1.0 / std::sqrt(static_cast<double>(layer.weight.rows()));
}

Var affine(Var x, const BoundLinear& l) { return matmul(x, l.weight) + l.bias; }

Var perceptron(Var x, const std::vector<BoundLinear>& layers, bool relu_last) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    x = affine(x, layers[k]);
    if (relu_last || k + 1 < layers.size()) x = relu(x);
  }
  return x;
}

Matrix to_matrix(const PointCloud& pc) { return pc; }

}  // namespace

// --- architecture --------------------------------------------------------------

void TargetArch::validate() const {
  require(widths.size() >= 2, "target arch: need at least two widths");
  require(widths.front() == 3 && widths.back() == 3,
          "target arch: first and last widths must be 3");
  for (int w : widths) require(w > 0, "target arch: widths must be positive");
}

Index TargetArch::param_count() const {
  Index count = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    count += static_cast<Index>(widths[k]) * widths[k + 1] + widths[k + 1];
  }
  return count;
}

Index TargetArch::layer_offset(Index k) const {
  Index offset = 0;
  for (Index j = 0; j < k; ++j) {
    offset += static_cast<Index>(widths[j]) * widths[j + 1] + widths[j + 1];
  }
  return offset;
}

void ModelConfig::validate() const {
  require(latent_dim >= 1, "model: latent_dim must be >= 1");
  require(encoder_widths.size() >= 2 && encoder_widths.front() == 3,
          "model: encoder widths must start at 3 and have at least one layer");
  require(!head_widths.empty() && head_widths.front() == encoder_widths.back(),
          "model: head widths must start at the encoder output width");
  for (int w : encoder_widths) require(w > 0, "model: encoder widths must be positive");
  for (int w : head_widths) require(w > 0, "model: head widths must be positive");
  for (int w : decoder_hidden) require(w > 0, "model: decoder widths must be positive");
  target.validate();
}

std::vector<int> ModelConfig::decoder_widths() const {
  std::vector<int> w{latent_dim};
  w.insert(w.end(), decoder_hidden.begin(), decoder_hidden.end());
  w.push_back(static_cast<int>(target.param_count()));
  return w;
}

HyperModel::HyperModel(ModelConfig cfg) : config(std::move(cfg)) {
  config.validate();
  encoder = zero_stack(config.encoder_widths);
  head = zero_stack(config.head_widths);
  mu_head = zero_linear(config.head_widths.back(), config.latent_dim);
  logvar_head = zero_linear(config.head_widths.back(), config.latent_dim);
  decoder = zero_stack(config.decoder_widths());
}

HyperModel HyperModel::initialized(ModelConfig cfg, Rng& rng) {
  HyperModel m(std::move(cfg));
  for (auto& l : m.encoder) init_uniform(l, fan_in_bound(l), rng);
  for (auto& l : m.head) init_uniform(l, fan_in_bound(l), rng);
  init_uniform(m.mu_head, fan_in_bound(m.mu_head), rng);
  init_uniform(m.logvar_head, fan_in_bound(m.logvar_head), rng);
  for (std::size_t k = 0; k < m.decoder.size(); ++k) {
    const double bound = fan_in_bound(m.decoder[k]);
    init_uniform(m.decoder[k], k + 1 == m.decoder.size() ? bound / 100.0 : bound, rng);
  }
  return m;
}

std::vector<std::pair<std::string, Matrix*>> HyperModel::parameters() {
  std::vector<std::pair<std::string, Matrix*>> out;
  auto add = [&](const std::string& prefix, Linear& l) {
    out.emplace_back(prefix + ".weight", &l.weight);
    out.emplace_back(prefix + ".bias", &l.bias);
  };
  for (std::size_t k = 0; k < encoder.size(); ++k) add("encoder." + std::to_string(k), encoder[k]);
  for (std::size_t k = 0; k < head.size(); ++k) add("head." + std::to_string(k), head[k]);
  add("mu", mu_head);
  add("logvar", logvar_head);
  for (std::size_t k = 0; k < decoder.size(); ++k) add("decoder." + std::to_string(k), decoder[k]);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> HyperModel::parameters() const {
  auto mut = const_cast<HyperModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Index HyperModel::parameter_count() const {
  Index n = 0;
  for (const auto& [name, p] : parameters()) n += p->size();
  return n;
}

// --- graph construction ----------------------------------------------------------

BoundModel bind(Tape& tape, const HyperModel& model, bool requires_grad) {
  BoundModel b;
  b.model = &model;
  b.tape = &tape;
  auto bind_linear = [&](const Linear& l) {
    BoundLinear out{Var{&tape, tape.borrow(l.weight, requires_grad)},
                    Var{&tape, tape.borrow(l.bias, requires_grad)}};
    b.parameter_nodes.push_back(out.weight.id);
    b.parameter_nodes.push_back(out.bias.id);
    return out;
  };
  for (const auto& l : model.encoder) b.encoder.push_back(bind_linear(l));
  for (const auto& l : model.head) b.head.push_back(bind_linear(l));
  b.mu_head = bind_linear(model.mu_head);
  b.logvar_head = bind_linear(model.logvar_head);
  for (const auto& l : model.decoder) b.decoder.push_back(bind_linear(l));
  return b;
}

EncodedVars encode(const BoundModel& m, Var points) {
  if (points.cols() != 3 || points.rows() == 0) {
    throw std::invalid_argument("encode: expected a nonempty N x 3 cloud");
  }
  Var pooled = max_rows(perceptron(points, m.encoder, true));
  Var hidden = perceptron(pooled, m.head, true);
  return {affine(hidden, m.mu_head), affine(hidden, m.logvar_head)};
}

Var reparameterize(Var mu, Var logvar, const Matrix& eps) {
  Tape& t = *mu.tape;
  Var noise{&t, t.constant(eps)};
  Var stddev = exp(scale(clamp(logvar, -kLogvarClamp, kLogvarClamp), 0.5));
  return mu + cwise_mul(stddev, noise);
}

Var hyper_decode(const BoundModel& m, Var z) { return perceptron(z, m.decoder, false); }

Var target_forward(const TargetArch& arch, Var theta, Var points) {
  if (theta.rows() != 1 || theta.cols() != arch.param_count()) {
    throw std::invalid_argument("target_forward: theta has " + std::to_string(theta.value().size()) +
                                " entries, arch needs " + std::to_string(arch.param_count()));
  }
  if (points.cols() != 3) throw std::invalid_argument("target_forward: points must be N x 3");
  Var h = points;
  Index offset = 0;
  for (Index k = 0; k < arch.layer_count(); ++k) {
    const Index in = arch.widths[k];
    const Index out = arch.widths[k + 1];
    Var w = reshape(slice(theta, 0, 1, offset, in * out), in, out);
    Var b = slice(theta, 0, 1, offset + in * out, out);
    offset += in * out + out;
    h = matmul(h, w) + b;
    if (k + 1 < arch.layer_count()) h = relu(h);
  }
  return h;
}

Var kld(Var mu, Var logvar) {
  Tape& t = *mu.tape;
  Var minus_one{&t, t.constant(Matrix::Constant(mu.rows(), mu.cols(), -1.0))};
  Var inner = exp(logvar) + cwise_mul(mu, mu) - logvar + minus_one;
  return scale(sum(inner), 0.5);
}

// --- direct evaluation -------------------------------------------------------------

LatentCode encode(const HyperModel& model, const PointCloud& pc) {
  validate_cloud(pc, "encode");
  Tape t;
  BoundModel b = bind(t, model, false);
  EncodedVars e = encode(b, Var{&t, t.constant(to_matrix(pc))});
  LatentCode code;
  code.mu = e.mu.value().row(0);
  code.logvar = e.logvar.value().row(0);
  code.z = code.mu;
  return code;
}

Eigen::RowVectorXd reparameterize(const LatentCode& code, Rng& rng, bool deterministic) {
  if (code.mu.size() != code.logvar.size()) {
    throw std::invalid_argument("reparameterize: mu and logvar sizes differ");
  }
  // logvar may be infinite; the clamp bounds it
  if (!code.mu.allFinite() || code.logvar.hasNaN()) {
    throw std::invalid_argument("reparameterize: non-finite code");
  }
  if (deterministic) return code.mu;
  Eigen::RowVectorXd z(code.mu.size());
  for (Index d = 0; d < z.size(); ++d) {
    const double lv = std::clamp(code.logvar[d], -kLogvarClamp, kLogvarClamp);
    z[d] = code.mu[d] + std::exp(0.5 * lv) * rng.normal();
  }
  return z;
}

TargetWeights hyper_decode(const HyperModel& model, const Eigen::RowVectorXd& z) {
  if (z.size() != model.config.latent_dim) {
    throw std::invalid_argument("hyper_decode: z has dimension " + std::to_string(z.size()) +
                                ", model expects " + std::to_string(model.config.latent_dim));
  }
  Tape t;
  BoundModel b = bind(t, model, false);
  Var theta = hyper_decode(b, Var{&t, t.constant(Matrix(z))});
  return {theta.value().row(0)};
}

PointCloud target_forward(const TargetArch& arch, const TargetWeights& weights,
                          const PointCloud& points) {
  if (weights.theta.size() != arch.param_count()) {
    throw std::invalid_argument("target_forward: theta has " +
                                std::to_string(weights.theta.size()) + " entries, arch needs " +
                                std::to_string(arch.param_count()));
  }
  Tape t;
  Var theta{&t, t.constant(Matrix(weights.theta))};
  Var out = target_forward(arch, theta, Var{&t, t.constant(to_matrix(points))});
  return out.value();
}

double kld(const Eigen::RowVectorXd& mu, const Eigen::RowVectorXd& logvar) {
  if (mu.size() != logvar.size()) throw std::invalid_argument("kld: dimension mismatch");
  return 0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
}

// --- loss and training -----------------------------------------------------------------

std::string loss_name(LossKind kind) { return kind == LossKind::Chamfer ? "cd" : "emd"; }

LossKind parse_loss(const std::string& name) {
  if (name == "cd" || name == "chamfer") return LossKind::Chamfer;
  if (name == "emd") return LossKind::Emd;
  throw std::invalid_argument("unknown loss '" + name + "' (expected cd or emd)");
}

void TrainConfig::validate() const {
  model.validate();
  require(lambda >= 0.0 && std::isfinite(lambda), "train config: lambda must be >= 0");
  require(learning_rate > 0.0, "train config: learning_rate must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "train config: beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "train config: beta2 must be in [0, 1)");
  require(epsilon > 0.0, "train config: epsilon must be > 0");
  require(steps >= 1, "train config: steps must be >= 1");
  require(batch_size >= 1, "train config: batch_size must be >= 1");
  require(prior_samples >= 0, "train config: prior_samples must be >= 0");
}

BatchLoss build_loss(const BoundModel& m, std::span<const PointCloud* const> clouds,
                     const TrainConfig& config, Rng& rng) {
  if (clouds.empty()) throw std::invalid_argument("loss: empty batch");
  Tape& t = *m.tape;
  const auto& mc = m.model->config;
  const Index dim = mc.latent_dim;
  const auto batch = static_cast<Index>(clouds.size());

  std::vector<Var> mus, logvars, samples;
  Matrix eps(batch, dim);
  for (Index b = 0; b < batch; ++b) {
    const PointCloud& pc = *clouds[static_cast<std::size_t>(b)];
    validate_cloud(pc, "loss");
    const Index n = config.prior_samples > 0 ? config.prior_samples : pc.rows();
    if (config.loss == LossKind::Emd && n != pc.rows()) {
      throw std::invalid_argument("loss: EMD needs as many prior samples as cloud points");
    }
    EncodedVars e = encode(m, Var{&t, t.constant(to_matrix(pc))});
    mus.push_back(e.mu);
    logvars.push_back(e.logvar);
    for (Index d = 0; d < dim; ++d) eps(b, d) = rng.normal();
    samples.push_back(Var{&t, t.constant(to_matrix(sample_ball(n, rng)))});
  }

  Var mu = concat(mus, 0);
  Var logvar = concat(logvars, 0);
  Var theta = hyper_decode(m, reparameterize(mu, logvar, eps));

  std::vector<Var> errs;
  double err_total = 0.0;
  for (Index b = 0; b < batch; ++b) {
    Var y = target_forward(mc.target, slice(theta, b, 1, 0, theta.cols()), samples[b]);
    Var target{&t, t.constant(to_matrix(*clouds[static_cast<std::size_t>(b)]))};
    Var err = config.loss == LossKind::Chamfer ? chamfer(target, y) : emd(target, y);
    err_total += err.value()(0, 0);
    errs.push_back(err);
  }
  Var err_sum = sum(concat(errs, 0));
  Var kl = kld(mu, logvar);

  BatchLoss out;
  out.total = scale(err_sum + scale(kl, config.lambda), 1.0 / static_cast<double>(batch));
  out.terms.total = out.total.value()(0, 0);
  out.terms.err = err_total / static_cast<double>(batch);
  out.terms.kl = kl.value()(0, 0) / static_cast<double>(batch);
  return out;
}

LossTerms loss(const HyperModel& model, const PointCloud& pc, const TrainConfig& config,
               Rng& rng) {
  Tape t;
  BoundModel b = bind(t, model, false);
  const PointCloud* batch[] = {&pc};
  return build_loss(b, batch, config, rng).terms;
}

double reconstruction_error(const HyperModel& model, std::span<const PointCloud> dataset,
                            LossKind kind, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("reconstruction_error: empty dataset");
  Rng rng(seed);
  double total = 0.0;
  for (const PointCloud& pc : dataset) {
    const TargetWeights w = hyper_decode(model, encode(model, pc).mu);
    const PointCloud y = target_forward(model.config.target, w, sample_ball(pc.rows(), rng));
    total += kind == LossKind::Chamfer ? chamfer(pc, y) : emd_exact(pc, y).cost;
  }
  return total / static_cast<double>(dataset.size());
}

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: size mismatch");
  if (m_.empty()) {
    for (Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k]->size() != params[k]->size()) throw std::invalid_argument("adam: shape mismatch");
    auto g = grads[k]->array();
    auto m = m_[k].array();
    auto v = v_[k].array();
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    params[k]->array() -= lr_ * (m / c1) / ((v / c2).sqrt() + eps_);
  }
}

TrainResult train(std::span<const PointCloud> dataset, const TrainConfig& config,
                  const std::function<void(const HistoryRow&)>& on_step) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const PointCloud& pc : dataset) {
    validate_cloud(pc, "train");
    if (pc.rowwise().norm().maxCoeff() > 1.0 + 1e-9) {
      throw std::invalid_argument("train: clouds must be normalized into the unit ball");
    }
  }

#ifdef __GLIBC__
  // Keep the large per-step gradient buffers on the heap instead of fresh
  // mmaps that page-fault on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  Rng rng(config.seed);
  TrainResult result{HyperModel::initialized(config.model, rng), {}};
  HyperModel& model = result.model;
  Adam adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);

  std::vector<Matrix*> params;
  for (auto& [name, p] : model.parameters()) params.push_back(p);

  const std::size_t batch =
      std::min(static_cast<std::size_t>(config.batch_size), dataset.size());
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  result.history.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    if (cursor + batch > order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      cursor = 0;
    }
    std::vector<const PointCloud*> clouds;
    for (std::size_t k = 0; k < batch; ++k) clouds.push_back(&dataset[order[cursor + k]]);
    cursor += batch;

    Tape tape;
    BoundModel bound = bind(tape, model, true);
    std::optional<BatchLoss> built;
    try {
      built = build_loss(bound, clouds, config, rng);
    } catch (const std::domain_error& e) {
      throw TrainingDiverged(step, "training diverged at step " + std::to_string(step) + ": " +
                                       e.what());
    }
    BatchLoss& bl = *built;
    if (!std::isfinite(bl.terms.total)) {
      throw TrainingDiverged(step, "training diverged: non-finite loss at step " +
                                       std::to_string(step));
    }
    tape.backward(bl.total.id);

    std::vector<const Matrix*> grads;
    for (NodeId id : bound.parameter_nodes) grads.push_back(&tape.grad(id));
    adam.step(params, grads);

    HistoryRow row{step, bl.terms};
    result.history.push_back(row);
    if (on_step) on_step(row);
  }
  return result;
}

}  // namespace hypercloud
