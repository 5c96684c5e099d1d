#include "pq4d/field.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "pq4d/errors.hpp"

namespace pq {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Floor for every log/ratio argument in the losses; keeps perfect one-hot
// targets and collapsed distributions finite.
constexpr double kLogClamp = 1e-12;

// Smallest usable bounding-box extent during position normalization.
constexpr double kMinSpan = 1e-12;

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

ConstMatrixMap weight_of(const Eigen::VectorXd& params, const LayerSpan& span) {
  return ConstMatrixMap(params.data() + span.weight_offset, span.outputs, span.inputs);
}

ConstVectorMap bias_of(const Eigen::VectorXd& params, const LayerSpan& span) {
  return ConstVectorMap(params.data() + span.bias_offset, span.outputs);
}

MatrixMap weight_grad_of(Eigen::VectorXd& grad, const LayerSpan& span) {
  return MatrixMap(grad.data() + span.weight_offset, span.outputs, span.inputs);
}

VectorMap bias_grad_of(Eigen::VectorXd& grad, const LayerSpan& span) {
  return VectorMap(grad.data() + span.bias_offset, span.outputs);
}

/// Column-wise softmax stabilized by per-column max subtraction.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double peak = logits.col(c).maxCoeff();
    Eigen::ArrayXd e = (logits.col(c).array() - peak).exp();
    probs.col(c) = e / e.sum();
  }
  return probs;
}

/// Pulls a gradient w.r.t. softmax outputs back to the logits for one
/// column: dz = f .* (df - (df . f)).
Eigen::VectorXd softmax_backward(const Eigen::VectorXd& f, const Eigen::VectorXd& df) {
  return f.cwiseProduct(df - Eigen::VectorXd::Constant(f.size(), df.dot(f)));
}

/// Decoder forward shared by every loss path: logits = W * E + b per column.
Eigen::MatrixXd decoder_logits(const IdentityField& field, const ParamLayout& layout,
                               const Eigen::MatrixXd& embeddings) {
  return (weight_of(field.params, layout.decoder) * embeddings).colwise() +
         bias_of(field.params, layout.decoder);
}

/// Accumulates MLP parameter gradients for one batched pass. `d_out` is the
/// loss gradient w.r.t. the final embeddings; `trace` holds the activations
/// recorded by field_forward_batch on the same inputs.
void mlp_backward(const Eigen::VectorXd& params, const ParamLayout& layout,
                  const ForwardTrace& trace, Eigen::MatrixXd d_out, Eigen::VectorXd& grad) {
  const int last = static_cast<int>(layout.mlp.size()) - 1;
  for (int li = last; li >= 0; --li) {
    const LayerSpan& span = layout.mlp[static_cast<std::size_t>(li)];
    // Hidden layers are ReLU; the embedding layer is linear, so its
    // incoming gradient passes straight through.
    if (li != last) {
      const Eigen::MatrixXd& activation = trace.layers[static_cast<std::size_t>(li) + 1];
      d_out = d_out.cwiseProduct((activation.array() > 0.0).cast<double>().matrix());
    }
    const Eigen::MatrixXd& input = trace.layers[static_cast<std::size_t>(li)];
    weight_grad_of(grad, span).noalias() += d_out * input.transpose();
    bias_grad_of(grad, span) += d_out.rowwise().sum();
    if (li > 0) d_out = weight_of(params, span).transpose() * d_out;
  }
}

/// KL-divergence sum and its gradient w.r.t. the class distributions over
/// all planned (sample, neighbor) pairs. `d_probs` accumulates the
/// unnormalized gradient; the caller applies the 1/(m*k) scale.
double consistency_terms(const Eigen::MatrixXd& probs, const std::vector<int>& samples,
                         const std::vector<std::vector<int>>& neighbors,
                         Eigen::MatrixXd* d_probs) {
  double total = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const int j = samples[s];
    for (const int i : neighbors[s]) {
      for (Eigen::Index c = 0; c < probs.rows(); ++c) {
        const double fj = probs(c, j);
        const double fi = probs(c, i);
        const double ratio = fj / fi;
        if (ratio >= kLogClamp) {
          const double log_ratio = std::log(ratio);
          total += fj * log_ratio;
          if (d_probs != nullptr) {
            (*d_probs)(c, j) += log_ratio + 1.0;
            (*d_probs)(c, i) -= ratio;
          }
        } else {
          // Clamped ratio: the log is a constant, so only the leading
          // factor keeps a gradient.
          total += fj * std::log(kLogClamp);
          if (d_probs != nullptr) (*d_probs)(c, j) += std::log(kLogClamp);
        }
      }
    }
  }
  return total;
}

int clamped_sample_count(int requested, std::size_t scene_size) {
  const int n = static_cast<int>(scene_size);
  if (requested <= n) return requested;
  std::cerr << "warning: sample count " << requested << " exceeds the " << n
            << " Gaussians in the scene; clamping\n";
  return n;
}

}  // namespace

void FieldConfig::validate() const {
  if (spatial_frequencies < 0 || temporal_frequencies < 0) {
    throw std::invalid_argument("field config: frequency counts must be non-negative");
  }
  if (hidden_layers < 1 || hidden_width < 1) {
    throw std::invalid_argument("field config: at least one hidden layer of width >= 1 required");
  }
  if (embedding_dim < 1) {
    throw std::invalid_argument("field config: embedding dimension must be positive");
  }
  if (classes < 2) {
    throw std::invalid_argument("field config: at least two classes required");
  }
  if (!bbox_lo.allFinite() || !bbox_hi.allFinite() || (bbox_hi - bbox_lo).minCoeff() < 0.0) {
    throw std::invalid_argument("field config: bounding box must be finite with hi >= lo");
  }
}

void IdentityField::validate() const {
  config.validate();
  if (params.size() != static_cast<Eigen::Index>(field_param_count(config))) {
    throw std::invalid_argument("field: parameter vector length does not match the config");
  }
  if (!params.allFinite()) {
    throw std::invalid_argument("field: parameters must be finite");
  }
}

ParamLayout param_layout(const FieldConfig& config) {
  ParamLayout layout;
  std::ptrdiff_t offset = 0;
  const auto add_layer = [&offset](int inputs, int outputs) {
    LayerSpan span;
    span.inputs = inputs;
    span.outputs = outputs;
    span.weight_offset = offset;
    offset += static_cast<std::ptrdiff_t>(outputs) * inputs;
    span.bias_offset = offset;
    offset += outputs;
    return span;
  };
  int in = config.input_dim();
  for (int i = 0; i < config.hidden_layers; ++i) {
    layout.mlp.push_back(add_layer(in, config.hidden_width));
    in = config.hidden_width;
  }
  layout.mlp.push_back(add_layer(in, config.embedding_dim));
  layout.decoder = add_layer(config.embedding_dim, config.classes);
  layout.total = static_cast<std::size_t>(offset);
  return layout;
}

std::size_t field_param_count(const FieldConfig& config) { return param_layout(config).total; }

IdentityField init_field(const FieldConfig& config, std::uint64_t seed) {
  config.validate();
  const ParamLayout layout = param_layout(config);
  IdentityField field;
  field.config = config;
  field.params.resize(static_cast<Eigen::Index>(layout.total));
  Rng rng(seed);
  const auto fill_span = [&](const LayerSpan& span, bool zero_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(span.inputs));
    double* w = field.params.data() + span.weight_offset;
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(span.outputs) * span.inputs; ++i) {
      w[i] = rng.uniform(-bound, bound);
    }
    double* b = field.params.data() + span.bias_offset;
    for (int i = 0; i < span.outputs; ++i) {
      b[i] = zero_bias ? 0.0 : rng.uniform(-bound, bound);
    }
  };
  for (std::size_t li = 0; li < layout.mlp.size(); ++li) {
    // The embedding layer starts with a zero bias so initial embeddings are
    // centered; every other bias shares its layer's weight bound.
    fill_span(layout.mlp[li], li + 1 == layout.mlp.size());
  }
  fill_span(layout.decoder, false);
  return field;
}

Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, int frequencies) {
  if (frequencies < 0) {
    throw std::invalid_argument("positional_encode: frequency count must be non-negative");
  }
  const Eigen::Index d = x.size();
  const Eigen::Index per = 2 * frequencies + 1;
  Eigen::VectorXd out(d * per);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double v = x[i];
    out[i * per] = v;
    double scaled = kPi * v;  // 2^l * pi * v, starting at l = 0
    for (int l = 0; l < frequencies; ++l) {
      out[i * per + 1 + 2 * l] = std::sin(scaled);
      out[i * per + 2 + 2 * l] = std::cos(scaled);
      scaled *= 2.0;
    }
  }
  return out;
}

Eigen::MatrixXd encode_inputs(const FieldConfig& config,
                              const std::vector<Eigen::Vector3d>& positions, double t) {
  const Eigen::Index spatial = 3 * (2 * config.spatial_frequencies + 1);
  Eigen::MatrixXd encoded(config.input_dim(), static_cast<Eigen::Index>(positions.size()));
  // A degenerate box axis means every position shares that coordinate, so
  // mapping it to 0 is exact; the guard only avoids 0/0.
  const Eigen::Vector3d span = (config.bbox_hi - config.bbox_lo).cwiseMax(kMinSpan);
  const Eigen::VectorXd time_code =
      positional_encode(Eigen::VectorXd::Constant(1, t), config.temporal_frequencies);
  for (std::size_t n = 0; n < positions.size(); ++n) {
    const Eigen::Vector3d unit = (positions[n] - config.bbox_lo).cwiseQuotient(span);
    encoded.col(static_cast<Eigen::Index>(n)).head(spatial) =
        positional_encode(unit, config.spatial_frequencies);
    encoded.col(static_cast<Eigen::Index>(n)).tail(time_code.size()) = time_code;
  }
  return encoded;
}

Eigen::MatrixXd field_forward_batch(const IdentityField& field, const Eigen::MatrixXd& inputs,
                                    ForwardTrace* trace) {
  const ParamLayout layout = param_layout(field.config);
  if (inputs.rows() != field.config.input_dim()) {
    throw std::invalid_argument("field_forward_batch: input rows do not match the encoding size");
  }
  if (trace != nullptr) {
    trace->layers.clear();
    trace->layers.reserve(layout.mlp.size() + 1);
    trace->layers.push_back(inputs);
  }
  Eigen::MatrixXd activation = inputs;
  for (std::size_t li = 0; li < layout.mlp.size(); ++li) {
    const LayerSpan& span = layout.mlp[li];
    Eigen::MatrixXd next =
        (weight_of(field.params, span) * activation).colwise() + bias_of(field.params, span);
    if (li + 1 < layout.mlp.size()) next = next.cwiseMax(0.0);
    if (trace != nullptr) trace->layers.push_back(next);
    activation = std::move(next);
  }
  return activation;
}

Eigen::VectorXd field_forward(const IdentityField& field, const Eigen::Vector3d& position,
                              double t) {
  if (!position.allFinite() || !std::isfinite(t)) {
    throw std::invalid_argument("field_forward: position and time must be finite");
  }
  const Eigen::MatrixXd encoded = encode_inputs(field.config, {position}, t);
  return field_forward_batch(field, encoded).col(0);
}

Eigen::VectorXd decode(const IdentityField& field, const Eigen::VectorXd& embedding) {
  return decode_batch(field, embedding).col(0);
}

Eigen::MatrixXd decode_batch(const IdentityField& field, const Eigen::MatrixXd& embeddings) {
  const ParamLayout layout = param_layout(field.config);
  if (embeddings.rows() != field.config.embedding_dim) {
    throw std::invalid_argument("decode: embedding rows do not match the field");
  }
  return softmax_columns(decoder_logits(field, layout, embeddings));
}

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: distributions must share one length");
  }
  double total = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    total += p[c] * std::log(std::max(p[c] / q[c], kLogClamp));
  }
  return total;
}

double loss_2d(const Eigen::MatrixXd& probs, const BinaryMask& mask) {
  const Eigen::Index pixels =
      static_cast<Eigen::Index>(mask.width) * static_cast<Eigen::Index>(mask.height);
  if (probs.cols() != pixels || pixels == 0) {
    throw std::invalid_argument("loss_2d: prediction columns must match the mask pixels");
  }
  if (probs.rows() < 2) {
    throw std::invalid_argument("loss_2d: at least two classes required");
  }
  double total = 0.0;
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const Eigen::Index label = mask.values[static_cast<std::size_t>(p)] != 0 ? 1 : 0;
    total -= std::log(std::max(probs(label, p), kLogClamp));
  }
  return total / static_cast<double>(pixels);
}

std::vector<int> knn(const std::vector<Eigen::Vector3d>& positions, int query, int k) {
  const int n = static_cast<int>(positions.size());
  if (query < 0 || query >= n) {
    throw std::invalid_argument("knn: query index out of range");
  }
  if (k < 1 || k >= n) {
    throw std::invalid_argument("knn: need 1 <= k < point count");
  }
  std::vector<std::pair<double, int>> order;
  order.reserve(static_cast<std::size_t>(n) - 1);
  for (int i = 0; i < n; ++i) {
    if (i == query) continue;
    order.emplace_back((positions[static_cast<std::size_t>(i)] -
                        positions[static_cast<std::size_t>(query)])
                           .squaredNorm(),
                       i);
  }
  std::partial_sort(order.begin(), order.begin() + k, order.end());
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
  return out;
}

void TrainConfig::validate() const {
  if (sample_count < 1 || neighbor_count < 1 || iterations < 1) {
    throw std::invalid_argument("train config: counts must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("train config: learning rate must be positive");
  }
  if (lambda_2d < 0.0 || lambda_3d < 0.0) {
    throw std::invalid_argument("train config: loss weights must be non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw std::invalid_argument("train config: moment decays must lie in [0,1) with epsilon > 0");
  }
}

double loss_3d(const DynamicPointScene& scene, const IdentityField& field, double t_sample,
               const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = static_cast<int>(scene.size());
  if (cfg.neighbor_count >= n) {
    throw std::invalid_argument("loss_3d: neighbor count must be below the Gaussian count");
  }
  const int m = clamped_sample_count(cfg.sample_count, scene.size());
  const std::vector<Eigen::Vector3d> positions = positions_at(scene, t_sample);
  const std::vector<int> samples = rng.sample_without_replacement(n, m);
  std::vector<std::vector<int>> neighbors(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    neighbors[s] = knn(positions, samples[s], cfg.neighbor_count);
  }
  const Eigen::MatrixXd probs = decode_batch(
      field, field_forward_batch(field, encode_inputs(field.config, positions, t_sample)));
  const double scale = static_cast<double>(m) * cfg.neighbor_count;
  return consistency_terms(probs, samples, neighbors, nullptr) / scale;
}

TrainData prepare_training(const DynamicPointScene& scene,
                           const std::vector<SupervisionView>& views) {
  if (views.empty()) {
    throw NoReliableEvidence("prepare_training: no reliable supervision views");
  }
  scene.validate();
  TrainData data;
  data.views = views;
  const int frames = scene.frame_count();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const SupervisionView& view = views[v];
    view.camera.validate();
    if (static_cast<int>(view.masks.frames.size()) != frames) {
      throw std::invalid_argument("prepare_training: mask track does not match the frame count");
    }
    for (const BinaryMask& mask : view.masks.frames) {
      if (mask.width != view.camera.width || mask.height != view.camera.height) {
        throw std::invalid_argument("prepare_training: mask size does not match the camera");
      }
    }
    for (int f = 0; f < frames; ++f) {
      const FragmentImage image =
          rasterize(scene, view.camera, scene.frame_times[static_cast<std::size_t>(f)]);
      PixelSplats splats;
      splats.offsets.reserve(image.pixels.size() + 1);
      splats.offsets.push_back(0);
      for (const auto& fragments : image.pixels) {
        double transmittance = 1.0;
        for (const SplatFragment& fragment : fragments) {
          const double w = static_cast<double>(fragment.weight);
          splats.gaussian.push_back(fragment.gaussian);
          splats.weight.push_back(w * transmittance);
          transmittance *= 1.0 - w;
        }
        splats.offsets.push_back(static_cast<int>(splats.gaussian.size()));
      }
      data.pairs.push_back({static_cast<int>(v), f});
      data.splats.push_back(std::move(splats));
    }
  }
  return data;
}

StepPlan make_step_plan(const DynamicPointScene& scene, const TrainData& data,
                        const TrainConfig& cfg, int pair, Rng& rng) {
  if (pair < 0 || pair >= static_cast<int>(data.pairs.size())) {
    throw std::invalid_argument("make_step_plan: pair index out of range");
  }
  StepPlan plan;
  plan.pair = pair;
  plan.t_sample = rng.uniform(scene.frame_times.front(), scene.frame_times.back());
  if (cfg.lambda_3d == 0.0) return plan;
  const int n = static_cast<int>(scene.size());
  if (cfg.neighbor_count >= n) {
    throw std::invalid_argument("make_step_plan: neighbor count must be below the Gaussian count");
  }
  const int m = clamped_sample_count(cfg.sample_count, scene.size());
  plan.samples = rng.sample_without_replacement(n, m);
  const std::vector<Eigen::Vector3d> positions = positions_at(scene, plan.t_sample);
  plan.neighbors.resize(plan.samples.size());
  for (std::size_t s = 0; s < plan.samples.size(); ++s) {
    plan.neighbors[s] = knn(positions, plan.samples[s], cfg.neighbor_count);
  }
  return plan;
}

LossBreakdown total_loss_and_grad(const DynamicPointScene& scene, const TrainData& data,
                                  const IdentityField& field, const StepPlan& plan,
                                  const TrainConfig& cfg, Eigen::VectorXd& grad) {
  if (plan.pair < 0 || plan.pair >= static_cast<int>(data.pairs.size())) {
    throw std::invalid_argument("total_loss_and_grad: plan pair out of range");
  }
  const ParamLayout layout = param_layout(field.config);
  grad.setZero(static_cast<Eigen::Index>(layout.total));

  const TrainPair& pair = data.pairs[static_cast<std::size_t>(plan.pair)];
  const SupervisionView& view = data.views[static_cast<std::size_t>(pair.view)];
  const BinaryMask& mask = view.masks.frames[static_cast<std::size_t>(pair.frame)];
  const PixelSplats& splats = data.splats[static_cast<std::size_t>(plan.pair)];
  const Eigen::Index pixels =
      static_cast<Eigen::Index>(mask.width) * static_cast<Eigen::Index>(mask.height);
  const Eigen::Index n = static_cast<Eigen::Index>(scene.size());
  const Eigen::Index classes = field.config.classes;

  LossBreakdown out;

  // Rendered-mask pass: embed every Gaussian at the supervision frame's
  // time, composite per-pixel features with the frozen splat weights,
  // decode, and take the cross entropy against the voted mask.
  const double t_frame = scene.frame_times[static_cast<std::size_t>(pair.frame)];
  ForwardTrace frame_trace;
  const Eigen::MatrixXd frame_embeddings = field_forward_batch(
      field, encode_inputs(field.config, positions_at(scene, t_frame), t_frame), &frame_trace);

  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(field.config.embedding_dim, pixels);
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const int begin = splats.offsets[static_cast<std::size_t>(p)];
    const int end = splats.offsets[static_cast<std::size_t>(p) + 1];
    for (int s = begin; s < end; ++s) {
      features.col(p) +=
          splats.weight[static_cast<std::size_t>(s)] *
          frame_embeddings.col(splats.gaussian[static_cast<std::size_t>(s)]);
    }
  }

  const Eigen::MatrixXd probs = softmax_columns(decoder_logits(field, layout, features));
  out.loss2d = loss_2d(probs, mask);

  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(classes, pixels);
  const double pixel_scale = cfg.lambda_2d / static_cast<double>(pixels);
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const Eigen::Index label = mask.values[static_cast<std::size_t>(p)] != 0 ? 1 : 0;
    // A clamped log is constant, so such a pixel contributes no gradient.
    if (probs(label, p) < kLogClamp) continue;
    d_logits.col(p) = probs.col(p) * pixel_scale;
    d_logits(label, p) -= pixel_scale;
  }

  weight_grad_of(grad, layout.decoder).noalias() += d_logits * features.transpose();
  bias_grad_of(grad, layout.decoder) += d_logits.rowwise().sum();

  const Eigen::MatrixXd d_features =
      weight_of(field.params, layout.decoder).transpose() * d_logits;
  Eigen::MatrixXd d_frame_embeddings = Eigen::MatrixXd::Zero(field.config.embedding_dim, n);
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const int begin = splats.offsets[static_cast<std::size_t>(p)];
    const int end = splats.offsets[static_cast<std::size_t>(p) + 1];
    for (int s = begin; s < end; ++s) {
      d_frame_embeddings.col(splats.gaussian[static_cast<std::size_t>(s)]) +=
          splats.weight[static_cast<std::size_t>(s)] * d_features.col(p);
    }
  }
  mlp_backward(field.params, layout, frame_trace, std::move(d_frame_embeddings), grad);

  // Neighbor-consistency pass at the planned sample time. Skipped entirely
  // when weightless so the returned gradient is exactly the mask term's.
  if (cfg.lambda_3d != 0.0 && !plan.samples.empty()) {
    ForwardTrace sample_trace;
    const Eigen::MatrixXd sample_embeddings = field_forward_batch(
        field,
        encode_inputs(field.config, positions_at(scene, plan.t_sample), plan.t_sample),
        &sample_trace);
    const Eigen::MatrixXd sample_probs =
        softmax_columns(decoder_logits(field, layout, sample_embeddings));

    Eigen::MatrixXd d_probs = Eigen::MatrixXd::Zero(classes, n);
    const double pair_count = static_cast<double>(plan.samples.size()) *
                              static_cast<double>(plan.neighbors.front().size());
    out.loss3d = consistency_terms(sample_probs, plan.samples, plan.neighbors, &d_probs) /
                 pair_count;

    const double sample_scale = cfg.lambda_3d / pair_count;
    Eigen::MatrixXd d_sample_logits = Eigen::MatrixXd::Zero(classes, n);
    for (Eigen::Index g = 0; g < n; ++g) {
      if (d_probs.col(g).isZero(0.0)) continue;
      d_sample_logits.col(g) =
          softmax_backward(sample_probs.col(g), d_probs.col(g)) * sample_scale;
    }

    weight_grad_of(grad, layout.decoder).noalias() +=
        d_sample_logits * sample_embeddings.transpose();
    bias_grad_of(grad, layout.decoder) += d_sample_logits.rowwise().sum();
    Eigen::MatrixXd d_sample_embeddings =
        weight_of(field.params, layout.decoder).transpose() * d_sample_logits;
    mlp_backward(field.params, layout, sample_trace, std::move(d_sample_embeddings), grad);
  }

  out.total = cfg.lambda_2d * out.loss2d + cfg.lambda_3d * out.loss3d;
  return out;
}

TrainResult train(const DynamicPointScene& scene, const std::vector<SupervisionView>& views,
                  const TrainConfig& cfg, FieldConfig field_config) {
  cfg.validate();
  if (views.empty()) {
    throw NoReliableEvidence("train: no reliable supervision views");
  }
  const TrainData data = prepare_training(scene, views);
  scene.bounding_box(field_config.bbox_lo, field_config.bbox_hi);
  field_config.validate();

  TrainResult result;
  result.field = init_field(field_config, derive_seed(cfg.seed, 0));
  Rng rng(derive_seed(cfg.seed, 1));

  // Clamp once up front so the per-iteration plans never re-warn.
  TrainConfig step_cfg = cfg;
  step_cfg.sample_count = clamped_sample_count(cfg.sample_count, scene.size());

  const Eigen::Index count = result.field.params.size();
  Eigen::VectorXd grad(count);
  Eigen::VectorXd moment1 = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd moment2 = Eigen::VectorXd::Zero(count);

  std::vector<int> order(data.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  result.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cursor == order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const StepPlan plan = make_step_plan(scene, data, step_cfg, order[cursor++], rng);
    const LossBreakdown loss = total_loss_and_grad(scene, data, result.field, plan, step_cfg, grad);
    result.trace.push_back({it, loss.loss2d, loss.loss3d, loss.total});

    moment1 = cfg.beta1 * moment1 + (1.0 - cfg.beta1) * grad;
    moment2 = cfg.beta2 * moment2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double step = static_cast<double>(it) + 1.0;
    const double correction1 = 1.0 - std::pow(cfg.beta1, step);
    const double correction2 = 1.0 - std::pow(cfg.beta2, step);
    result.field.params.array() -=
        cfg.learning_rate * (moment1.array() / correction1) /
        ((moment2.array() / correction2).sqrt() + cfg.epsilon);
  }
  return result;
}

BinaryMask query_mask(const DynamicPointScene& scene, const IdentityField& field,
                      const CameraModel& camera, double t, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("query_mask: threshold must lie strictly in (0,1)");
  }
  BinaryMask mask(camera.width, camera.height);
  if (scene.size() == 0) return mask;
  const FragmentImage image = rasterize(scene, camera, t);
  // composite_feature expects one embedding row per Gaussian.
  const Eigen::MatrixXd embeddings =
      field_forward_batch(field, encode_inputs(field.config, positions_at(scene, t), t))
          .transpose();
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const auto& fragments = image.at(x, y);
      if (fragments.empty()) continue;
      const Eigen::VectorXd pixel_embedding = composite_feature(fragments, embeddings);
      mask.set(x, y, decode(field, pixel_embedding)[1] > threshold);
    }
  }
  return mask;
}

LabeledScene label_gaussians(const DynamicPointScene& scene, const IdentityField& field,
                             double t) {
  LabeledScene out;
  const Eigen::Index n = static_cast<Eigen::Index>(scene.size());
  out.distributions = decode_batch(
      field, field_forward_batch(field, encode_inputs(field.config, positions_at(scene, t), t)));
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index g = 0; g < n; ++g) {
    int best = 0;
    for (Eigen::Index c = 1; c < out.distributions.rows(); ++c) {
      // Strict comparison keeps ties on the lower class index.
      if (out.distributions(c, g) > out.distributions(best, g)) best = static_cast<int>(c);
    }
    out.labels[static_cast<std::size_t>(g)] = best;
  }
  return out;
}

}  // namespace pq
