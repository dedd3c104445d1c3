#pragma once

#include "hypercloud/autodiff.hpp"
#include "hypercloud/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hypercloud {

/// Layer widths of the per-shape target network R^3 -> R^3. Hidden layers use
/// relu, the output layer is affine.
struct TargetArch {
  std::vector<int> widths{3, 32, 64, 128, 64, 3};

  void validate() const;
  Index layer_count() const { return static_cast<Index>(widths.size()) - 1; }
  // sum over layers of in*out + out
  Index param_count() const;
  // Offset of layer k inside theta. Each layer stores its in x out weight
  // matrix row-major, followed by its bias.
  Index layer_offset(Index k) const;
};

struct TargetWeights {
  Eigen::RowVectorXd theta;
};

// Affine layer y = x * weight + bias.
struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

struct ModelConfig {
  int latent_dim = 64;
  // shared per-point perceptron, max-pooled over the set
  std::vector<int> encoder_widths{3, 64, 128, 256};
  // pooled feature -> hidden; then two affine heads for mu and logvar
  std::vector<int> head_widths{256, 128};
  // hidden widths between the latent code and theta
  std::vector<int> decoder_hidden{256, 512};
  TargetArch target;

  void validate() const;
  // {latent_dim, decoder_hidden..., target.param_count()}
  std::vector<int> decoder_widths() const;
};

/// Encoder plus hypernetwork decoder. The composition maps a cloud to the
/// weights theta of its target network.
struct HyperModel {
  ModelConfig config;
  std::vector<Linear> encoder;
  std::vector<Linear> head;
  Linear mu_head;
  Linear logvar_head;
  std::vector<Linear> decoder;

  // All-zero parameters of the right shapes.
  explicit HyperModel(ModelConfig cfg = {});

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; the
  // final decoder layer uses 1/100 of that bound so initial theta is small.
  static HyperModel initialized(ModelConfig cfg, Rng& rng);

  // Fixed traversal order shared by binding, optimizers and checkpoints.
  std::vector<std::pair<std::string, Matrix*>> parameters();
  std::vector<std::pair<std::string, const Matrix*>> parameters() const;
  Index parameter_count() const;
};

struct LatentCode {
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd logvar;
  Eigen::RowVectorXd z;
};

inline constexpr double kLogvarClamp = 20.0;

// --- graph construction ------------------------------------------------------

struct BoundLinear {
  Var weight;
  Var bias;
};

/// Model parameters as leaves of one tape.
struct BoundModel {
  const HyperModel* model = nullptr;
  Tape* tape = nullptr;
  std::vector<BoundLinear> encoder;
  std::vector<BoundLinear> head;
  BoundLinear mu_head;
  BoundLinear logvar_head;
  std::vector<BoundLinear> decoder;
  // same order as HyperModel::parameters()
  std::vector<NodeId> parameter_nodes;
};

// Parameter leaves borrow the model's storage; the model must outlive the tape.
BoundModel bind(Tape& tape, const HyperModel& model, bool requires_grad);

struct EncodedVars {
  Var mu;
  Var logvar;
};

// points: N x 3 -> mu, logvar each 1 x D
EncodedVars encode(const BoundModel& m, Var points);
// Rows of mu/logvar are independent codes; eps has the same shape.
Var reparameterize(Var mu, Var logvar, const Matrix& eps);
// z: B x D -> theta: B x P
Var hyper_decode(const BoundModel& m, Var z);
// theta: 1 x P, points: N x 3 -> N x 3
Var target_forward(const TargetArch& arch, Var theta, Var points);
// Summed over all entries.
Var kld(Var mu, Var logvar);

// --- direct evaluation ---------------------------------------------------------

/// Deterministic encoding: z is set to mu.
LatentCode encode(const HyperModel& model, const PointCloud& pc);
/// z = mu + exp(logvar / 2) * eps with logvar clamped to [-20, 20];
/// deterministic mode returns mu.
Eigen::RowVectorXd reparameterize(const LatentCode& code, Rng& rng, bool deterministic = false);
TargetWeights hyper_decode(const HyperModel& model, const Eigen::RowVectorXd& z);
PointCloud target_forward(const TargetArch& arch, const TargetWeights& weights,
                          const PointCloud& points);
double kld(const Eigen::RowVectorXd& mu, const Eigen::RowVectorXd& logvar);

// --- loss and training ---------------------------------------------------------

enum class LossKind { Chamfer, Emd };

std::string loss_name(LossKind kind);
LossKind parse_loss(const std::string& name);

struct TrainConfig {
  ModelConfig model;
  LossKind loss = LossKind::Chamfer;
  double lambda = 0.001;  // KL weight
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int steps = 1000;
  int batch_size = 8;
  // Prior samples per cloud for the reconstruction; 0 means the cloud's size.
  int prior_samples = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double err = 0.0;
  double kl = 0.0;
};

struct BatchLoss {
  Var total;  // mean over the batch of err + lambda * kl
  LossTerms terms;  // batch means
};

/// Per cloud: encode, sample z, decode theta, push fresh prior samples
/// through the target network and compare with the cloud. The random stream
/// is consumed cloud by cloud: D normals for z, then the prior samples.
BatchLoss build_loss(const BoundModel& m, std::span<const PointCloud* const> clouds,
                     const TrainConfig& config, Rng& rng);

LossTerms loss(const HyperModel& model, const PointCloud& pc, const TrainConfig& config, Rng& rng);

/// Mean reconstruction error over a dataset using z = mu and prior samples
/// drawn from a generator seeded with `seed`.
double reconstruction_error(const HyperModel& model, std::span<const PointCloud> dataset,
                            LossKind kind, std::uint64_t seed);

class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads);
  long iterations() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct HistoryRow {
  int step = 0;
  LossTerms terms;
};

struct TrainResult {
  HyperModel model;
  std::vector<HistoryRow> history;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Adam over shuffled mini-batches. history[k] holds the batch loss evaluated
/// before the k-th update.
TrainResult train(std::span<const PointCloud> dataset, const TrainConfig& config,
                  const std::function<void(const HistoryRow&)>& on_step = {});

}  // namespace hypercloud
