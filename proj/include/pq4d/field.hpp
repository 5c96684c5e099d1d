#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pq4d/geometry.hpp"
#include "pq4d/rng.hpp"
#include "pq4d/scene.hpp"

namespace pq {

/// Architecture and input-encoding settings of the identity feature field.
/// World positions are rescaled into the stored bounding box before frequency
/// encoding (unbounded coordinates would break the encoding), so the box
/// travels with the field and saved checkpoints reproduce the same function.
struct FieldConfig {
  int spatial_frequencies = 10;   // frequency count for encoded positions
  int temporal_frequencies = 6;   // frequency count for encoded time
  int hidden_layers = 2;          // ReLU layers before the embedding layer
  int hidden_width = 64;
  int embedding_dim = 16;         // E: per-Gaussian identity embedding size
  int classes = 2;                // C: decoder output classes (>= 2)
  Eigen::Vector3d bbox_lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d bbox_hi = Eigen::Vector3d::Ones();

  /// Three encoded position components plus the encoded time.
  int input_dim() const {
    return 3 * (2 * spatial_frequencies + 1) + (2 * temporal_frequencies + 1);
  }

  /// Throws std::invalid_argument on non-positive sizes, classes < 2,
  /// negative frequency counts, or a non-finite/inverted bounding box.
  void validate() const;
};

/// Temporal identity field: an MLP from encoded (position, time) to an
/// E-dimensional embedding plus a per-pixel affine decoder from E to C class
/// logits. All parameters live in one flat vector so the optimizer, the
/// finite-difference checks, and the checkpoint format can treat them
/// uniformly; param_layout() locates the individual matrices.
struct IdentityField {
  FieldConfig config;
  Eigen::VectorXd params;

  /// Throws std::invalid_argument when the parameter vector has the wrong
  /// length for the config or contains non-finite entries.
  void validate() const;
};

/// Location of one affine layer inside the flat parameter vector: a
/// column-major (outputs x inputs) weight matrix followed by the bias.
struct LayerSpan {
  std::ptrdiff_t weight_offset = 0;
  std::ptrdiff_t bias_offset = 0;
  int inputs = 0;
  int outputs = 0;
};

struct ParamLayout {
  std::vector<LayerSpan> mlp;  // hidden layers, then the embedding layer
  LayerSpan decoder;           // embedding_dim -> classes
  std::size_t total = 0;
};

ParamLayout param_layout(const FieldConfig& config);

std::size_t field_param_count(const FieldConfig& config);

/// Seeded parameter initialization: every affine layer draws uniformly from
/// +-1/sqrt(fan_in); the bias of the embedding layer starts at zero. The
/// config is adopted as given, so callers set the bounding box first.
IdentityField init_field(const FieldConfig& config, std::uint64_t seed);

/// Frequency encoding of each input component: the raw value followed by
/// [sin(2^l pi x), cos(2^l pi x)] for l = 0..frequencies-1, components
/// concatenated in order. Output length is x.size() * (2 * frequencies + 1).
Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, int frequencies);

/// Encoded network input for a batch of world positions at one shared time:
/// column n holds the concatenated position and time encodings of
/// positions[n], with positions first normalized to the config bounding box.
Eigen::MatrixXd encode_inputs(const FieldConfig& config,
                              const std::vector<Eigen::Vector3d>& positions, double t);

/// Per-layer activations kept by the batched forward pass for backprop:
/// layers[0] is the input, layers[i+1] the output of layer i.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> layers;
};

/// Batched MLP forward. `inputs` columns are encoded samples (input_dim x N);
/// the result columns are embeddings (embedding_dim x N).
Eigen::MatrixXd field_forward_batch(const IdentityField& field, const Eigen::MatrixXd& inputs,
                                    ForwardTrace* trace = nullptr);

/// Embedding of one world position at time t: normalize, encode, run the
/// MLP. Throws std::invalid_argument on non-finite input.
Eigen::VectorXd field_forward(const IdentityField& field, const Eigen::Vector3d& position,
                              double t);

/// Class distribution for one embedding: softmax of the affine decoder
/// output, stabilized by max subtraction. Strictly positive, sums to 1.
Eigen::VectorXd decode(const IdentityField& field, const Eigen::VectorXd& embedding);

/// Column-wise decode of a batch of embeddings (E x P in, C x P out).
Eigen::MatrixXd decode_batch(const IdentityField& field, const Eigen::MatrixXd& embeddings);

/// sum_c p[c] * log(p[c] / q[c]) with each ratio clamped below at 1e-12.
/// Throws std::invalid_argument on size mismatch.
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Mean cross entropy between per-pixel class distributions (column p of
/// `probs` is the distribution at row-major pixel p) and the mask's one-hot
/// labels, foreground being class 1. Logs are clamped at 1e-12 and the sum
/// is averaged over every pixel. Throws std::invalid_argument when the
/// column count does not match the mask or fewer than two classes are given.
double loss_2d(const Eigen::MatrixXd& probs, const BinaryMask& mask);

/// Indices of the k nearest points to positions[query] (excluding it),
/// ascending by Euclidean distance with ties broken by lower index. Throws
/// std::invalid_argument when k < 1, k >= positions.size(), or query is out
/// of range.
std::vector<int> knn(const std::vector<Eigen::Vector3d>& positions, int query, int k);

enum class BatchStrategy {
  /// Each epoch visits every supervision (view, frame) pair exactly once in
  /// a freshly shuffled order.
  kShuffledRoundRobin = 0,
};

struct TrainConfig {
  double lambda_2d = 1.0;     // weight of the rendered-mask term
  double lambda_3d = 2.0;     // weight of the neighbor-consistency term
  int sample_count = 1000;    // Gaussians sampled per consistency step
  int neighbor_count = 5;     // neighbors per sampled Gaussian
  int iterations = 2000;
  double learning_rate = 5e-4;
  double beta1 = 0.9;         // first-moment decay
  double beta2 = 0.999;       // second-moment decay
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  BatchStrategy batch = BatchStrategy::kShuffledRoundRobin;

  /// Throws std::invalid_argument on non-positive counts, a non-positive
  /// learning rate, negative loss weights, or out-of-range Adam constants.
  void validate() const;
};

/// Neighbor-consistency loss at one sampled time: cfg.sample_count Gaussians
/// are drawn without replacement (seeded), and the loss is the mean KL
/// divergence from each drawn Gaussian's class distribution to those of its
/// k nearest neighbors at t_sample. Throws std::invalid_argument when
/// cfg.neighbor_count >= scene.size(); a sample count above scene.size() is
/// clamped with a warning on stderr.
double loss_3d(const DynamicPointScene& scene, const IdentityField& field, double t_sample,
               const TrainConfig& cfg, Rng& rng);

/// One reliable view used as supervision: its camera plus the voted masks.
struct SupervisionView {
  CameraModel camera;
  MaskSequence masks;
};

/// Per-pixel splat lists with the compositing transmittance folded into each
/// fragment weight. Geometry stays frozen during optimization, so these are
/// computed once per (view, frame) and treated as constants afterwards.
struct PixelSplats {
  std::vector<int> offsets;    // P+1 prefix offsets over row-major pixels
  std::vector<int> gaussian;   // contributing Gaussian per fragment
  std::vector<double> weight;  // alpha * falloff * transmittance
};

struct TrainPair {
  int view = 0;   // index into TrainData::views
  int frame = 0;  // index into the scene's frame list
};

/// Immutable state shared by every optimization step.
struct TrainData {
  std::vector<SupervisionView> views;
  std::vector<TrainPair> pairs;     // view-major list of all (view, frame)
  std::vector<PixelSplats> splats;  // parallel to pairs
};

/// Rasterizes every supervision (view, frame) once and folds the blending
/// transmittance into per-fragment weights. Throws NoReliableEvidence when
/// `views` is empty and std::invalid_argument when a mask track does not
/// match the scene's frame count or its camera's image size.
TrainData prepare_training(const DynamicPointScene& scene,
                           const std::vector<SupervisionView>& views);

/// Everything random that one optimization step needs, drawn up front so the
/// loss and gradient evaluation is a deterministic function of the
/// parameters alone (which keeps it finite-difference checkable).
struct StepPlan {
  int pair = 0;           // index into TrainData::pairs
  double t_sample = 0.0;  // timestamp anchoring the consistency term
  std::vector<int> samples;                 // drawn Gaussian indices
  std::vector<std::vector<int>> neighbors;  // k nearest of each sample at t_sample
};

/// Draws t_sample uniformly over the scene's frame-time range, samples
/// Gaussians without replacement, and resolves their neighbors at t_sample.
/// Sampling is skipped when cfg.lambda_3d is zero.
StepPlan make_step_plan(const DynamicPointScene& scene, const TrainData& data,
                        const TrainConfig& cfg, int pair, Rng& rng);

struct LossBreakdown {
  double total = 0.0;   // lambda_2d * loss2d + lambda_3d * loss3d
  double loss2d = 0.0;  // unweighted rendered-mask cross entropy
  double loss3d = 0.0;  // unweighted neighbor-consistency term
};

/// Loss and analytic gradient of one step: cross entropy of the rendered
/// class image for the planned (view, frame) plus the weighted consistency
/// term at plan.t_sample. `grad` is resized and overwritten. Fragments and
/// blend weights are constants (frozen geometry); gradients flow through the
/// decoder, the compositing, and both MLP evaluations. The consistency pass
/// is skipped entirely when its weight is zero or the plan holds no samples,
/// in which case loss3d reads 0. Throws std::invalid_argument on an
/// out-of-range plan.
LossBreakdown total_loss_and_grad(const DynamicPointScene& scene, const TrainData& data,
                                  const IdentityField& field, const StepPlan& plan,
                                  const TrainConfig& cfg, Eigen::VectorXd& grad);

struct TraceRow {
  int iteration = 0;
  double loss2d = 0.0;
  double loss3d = 0.0;
  double total = 0.0;
};

struct TrainResult {
  IdentityField field;
  std::vector<TraceRow> trace;
};

/// Fits an identity field to the reliable supervision with Adam
/// (bias-corrected moments). Parameter init is seeded, each epoch walks the
/// (view, frame) pairs in a freshly shuffled order, and one uniformly drawn
/// timestamp per iteration anchors the consistency term. The result is a
/// deterministic function of (scene, views, cfg, field_config). Throws
/// NoReliableEvidence when `views` is empty. The field's bounding box is
/// always taken from the scene, overriding whatever field_config carries.
TrainResult train(const DynamicPointScene& scene, const std::vector<SupervisionView>& views,
                  const TrainConfig& cfg, FieldConfig field_config = FieldConfig{});

/// Renders the class field at (camera, t) and thresholds the foreground
/// probability: a pixel is foreground when its composited embedding decodes
/// to f[1] > threshold. Pixels no splat touches are always background.
/// Throws std::invalid_argument unless threshold lies strictly in (0, 1).
BinaryMask query_mask(const DynamicPointScene& scene, const IdentityField& field,
                      const CameraModel& camera, double t, double threshold = 0.5);

/// Per-Gaussian class distributions at time t with argmax labels.
struct LabeledScene {
  Eigen::MatrixXd distributions;  // classes x N, every column sums to 1
  std::vector<int> labels;        // argmax per Gaussian, ties to lower index
};

LabeledScene label_gaussians(const DynamicPointScene& scene, const IdentityField& field,
                             double t);

}  // namespace pq
