#include "opl/micronet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "opl/error.hpp"
#include "opl/rng.hpp"

namespace opl {
namespace {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Activations are (channels x pixels), column-major: one column per pixel.
struct LayerCache {
  MatrixF cols;  // im2col of the layer input, (k*k*in) x pixels
  MatrixF out;   // layer output after the optional ReLU
};

void im2col(const MatrixF& in, int h, int w, const LayerSpec& l, MatrixF& cols) {
  const int k = l.kernel, pad = l.padding(), cin = l.in_channels;
  cols.setZero(static_cast<Eigen::Index>(k) * k * cin, static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y - pad + ky * l.dilation;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = x - pad + kx * l.dilation;
          if (sx < 0 || sx >= w) continue;
          const Eigen::Index tap = ky * k + kx;
          cols.col(p).segment(tap * cin, cin) = in.col(static_cast<Eigen::Index>(sy) * w + sx);
        }
      }
    }
  }
}

void col2im_add(const MatrixF& dcols, int h, int w, const LayerSpec& l, MatrixF& din) {
  const int k = l.kernel, pad = l.padding(), cin = l.in_channels;
  din.setZero(cin, static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y - pad + ky * l.dilation;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = x - pad + kx * l.dilation;
          if (sx < 0 || sx >= w) continue;
          const Eigen::Index tap = ky * k + kx;
          din.col(static_cast<Eigen::Index>(sy) * w + sx) += dcols.col(p).segment(tap * cin, cin);
        }
      }
    }
  }
}

Eigen::Map<const RowMatrixF> weight_matrix(const Tensor& t, const LayerSpec& l) {
  return {t.data.data(), l.out_channels,
          static_cast<Eigen::Index>(l.kernel) * l.kernel * l.in_channels};
}

void check_input(const ModelState& model, const ImageTensor& img) {
  if (img.channels != model.preset.layers.front().in_channels) {
    throw ShapeError("forward: image has " + std::to_string(img.channels) +
                     " channels, model expects " +
                     std::to_string(model.preset.layers.front().in_channels));
  }
  if (img.data.size() != img.pixels() * static_cast<std::size_t>(img.channels)) {
    throw ShapeError("forward: image data length does not match its dimensions");
  }
}

// Per-thread buffers reused across calls; sizes only change with the image or preset.
struct Workspace {
  MatrixF input;
  std::vector<LayerCache> cache;
  std::vector<MatrixF> delta;  // d loss / d layer output, one per layer
  std::vector<MatrixF> dcols;
  RowMatrixF grad_w;
  Eigen::VectorXf grad_b;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

void run_forward(const ModelState& model, const ImageTensor& img, Workspace& ws) {
  check_input(model, img);
  const auto& layers = model.preset.layers;
  ws.cache.resize(layers.size());
  // [0,1] intensities enter the network as [-1,1].
  const auto raw = Eigen::Map<const MatrixF>(img.data.data(), img.channels,
                                             static_cast<Eigen::Index>(img.pixels()));
  ws.input = (raw.array() * 2.0f - 1.0f).matrix();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const Tensor& weight = model.params[2 * i];
    const Tensor& bias = model.params[2 * i + 1];
    const MatrixF& input = i == 0 ? ws.input : ws.cache[i - 1].out;
    if (l.kernel == 1) {
      ws.cache[i].cols = input;
    } else {
      im2col(input, img.height, img.width, l, ws.cache[i].cols);
    }
    MatrixF& out = ws.cache[i].out;
    out.noalias() = weight_matrix(weight, l) * ws.cache[i].cols;
    out.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.data.data(), l.out_channels);
    if (l.relu) out = out.cwiseMax(0.0f);
  }
}

void check_mask(const LabelMap& labels, PixelMask mask, int num_classes) {
  if (mask.empty()) throw ValidationError("no supervision: empty pixel mask");
  for (std::size_t p : mask) {
    if (p >= labels.pixels()) {
      throw ShapeError("mask pixel " + std::to_string(p) + " outside the label map");
    }
    const auto y = labels.data[p];
    if (y == kIgnore) {
      throw ValidationError("masked pixel " + std::to_string(p) + " carries the ignore label");
    }
    if (y >= num_classes) {
      throw ValidationError("masked pixel " + std::to_string(p) + " has class " +
                            std::to_string(y) + " outside the model's classes");
    }
  }
}

double log_sum_exp(const float* z, int n) {
  double m = z[0];
  for (int c = 1; c < n; ++c) m = std::max(m, static_cast<double>(z[c]));
  double s = 0.0;
  for (int c = 0; c < n; ++c) s += std::exp(static_cast<double>(z[c]) - m);
  return m + std::log(s);
}

Tensor make_tensor(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return Tensor{std::move(name), std::move(shape), std::vector<float>(n, 0.0f)};
}

TensorList zeros_like(const TensorList& list) {
  TensorList out;
  out.reserve(list.size());
  for (const auto& t : list) out.push_back(make_tensor(t.name, t.shape));
  return out;
}

}  // namespace

ArchPreset ArchPreset::micro_a(int num_classes) {
  return ArchPreset{"micro-A", num_classes,
                    {{3, 3, 16, 1, true},
                     {3, 16, 32, 1, true},
                     {3, 32, 32, 2, true},
                     {1, 32, num_classes, 1, false}}};
}

ArchPreset ArchPreset::micro_b(int num_classes) {
  return ArchPreset{"micro-B", num_classes,
                    {{5, 3, 12, 1, true},
                     {3, 12, 24, 1, true},
                     {3, 24, 24, 1, true},
                     {1, 24, num_classes, 1, false}}};
}

ArchPreset ArchPreset::from_name(const std::string& name, int num_classes) {
  if (name == "micro-A") return micro_a(num_classes);
  if (name == "micro-B") return micro_b(num_classes);
  throw ConfigError("unknown architecture preset '" + name + "' (expected micro-A or micro-B)");
}

std::size_t ArchPreset::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.out_channels) * l.kernel * l.kernel * l.in_channels + l.out_channels;
  }
  return n;
}

int ArchPreset::receptive_radius() const {
  int r = 0;
  for (const auto& l : layers) r += l.padding();
  return r;
}

void ArchPreset::validate() const {
  if (layers.empty()) throw ConfigError("architecture '" + name + "' has no layers");
  if (num_classes < 1 || num_classes > 254) throw ConfigError("architecture class count out of range");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kernel < 1 || l.kernel % 2 == 0 || l.dilation < 1 || l.in_channels < 1 || l.out_channels < 1) {
      throw ConfigError("architecture '" + name + "': layer " + std::to_string(i) +
                        " is not an odd-kernel same-padded convolution");
    }
    if (i > 0 && l.in_channels != layers[i - 1].out_channels) {
      throw ConfigError("architecture '" + name + "': layer " + std::to_string(i) + " is not chained");
    }
  }
  if (layers.back().out_channels != num_classes) {
    throw ConfigError("architecture '" + name + "': last layer must emit num_classes channels");
  }
}

std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes(const ArchPreset& preset) {
  std::vector<std::pair<std::string, std::vector<int>>> shapes;
  for (std::size_t i = 0; i < preset.layers.size(); ++i) {
    const auto& l = preset.layers[i];
    const std::string prefix = "conv" + std::to_string(i + 1);
    shapes.push_back({prefix + ".weight", {l.out_channels, l.kernel, l.kernel, l.in_channels}});
    shapes.push_back({prefix + ".bias", {l.out_channels}});
  }
  return shapes;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params) n += t.size();
  return n;
}

void ModelState::validate() const {
  const auto shapes = parameter_shapes(preset);
  auto check = [&](const TensorList& list, const char* what) {
    if (list.size() != shapes.size()) {
      throw ShapeError(std::string(what) + ": expected " + std::to_string(shapes.size()) +
                       " tensors, found " + std::to_string(list.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (list[i].name != shapes[i].first || list[i].shape != shapes[i].second) {
        throw ShapeError(std::string(what) + ": tensor '" + list[i].name +
                         "' does not match preset " + preset.name);
      }
      std::size_t n = 1;
      for (int d : shapes[i].second) n *= static_cast<std::size_t>(d);
      if (list[i].data.size() != n) throw ShapeError(std::string(what) + ": payload size mismatch");
    }
  };
  check(params, "params");
  check(adam_m, "adam first moment");
  check(adam_v, "adam second moment");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (inner_iters < 1) throw ConfigError("inner_iters must be at least 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0,1)");
  if (!(epsilon > 0)) throw ConfigError("adam epsilon must be positive");
}

ModelState init_model(const ArchPreset& preset, std::uint64_t seed) {
  preset.validate();
  ModelState model;
  model.preset = preset;
  model.seed = seed;
  RngStream rng(seed);
  for (const auto& [name, shape] : parameter_shapes(preset)) {
    Tensor t = make_tensor(name, shape);
    if (shape.size() == 4) {
      const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
      const double bound = std::sqrt(6.0 / fan_in);
      for (auto& v : t.data) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    }
    model.params.push_back(std::move(t));
  }
  model.adam_m = zeros_like(model.params);
  model.adam_v = zeros_like(model.params);
  return model;
}

Logits forward(const ModelState& model, const ImageTensor& img) {
  Workspace& ws = workspace();
  run_forward(model, img, ws);
  Logits logits{img.height, img.width, model.preset.num_classes, {}};
  const MatrixF& out = ws.cache.back().out;
  logits.data.assign(out.data(), out.data() + out.size());
  return logits;
}

LabelMap predict(const Logits& logits) {
  LabelMap lbl(logits.height, logits.width, logits.num_classes, 0);
  for (std::size_t p = 0; p < lbl.pixels(); ++p) {
    const float* z = logits.at(p);
    int best = 0;
    for (int c = 1; c < logits.num_classes; ++c) {
      if (z[c] > z[best]) best = c;
    }
    lbl.data[p] = static_cast<std::uint8_t>(best);
  }
  return lbl;
}

double sparse_ce_loss(const Logits& logits, const LabelMap& labels, PixelMask mask) {
  if (labels.height != logits.height || labels.width != logits.width) {
    throw ShapeError("loss: logits and labels differ in size");
  }
  check_mask(labels, mask, logits.num_classes);
  double total = 0.0;
  for (std::size_t p : mask) {
    const float* z = logits.at(p);
    total += log_sum_exp(z, logits.num_classes) - z[labels.data[p]];
  }
  return total / static_cast<double>(mask.size());
}

LossAndGradients loss_and_gradients(const ModelState& model, const ImageTensor& img,
                                    const LabelMap& labels, PixelMask mask) {
  if (labels.height != img.height || labels.width != img.width) {
    throw ShapeError("backward: image and labels differ in size");
  }
  check_mask(labels, mask, model.preset.num_classes);
  const auto& layers = model.preset.layers;
  Workspace& ws = workspace();
  run_forward(model, img, ws);
  const auto& cache = ws.cache;

  const int classes = model.preset.num_classes;
  const auto pixels = static_cast<Eigen::Index>(img.pixels());
  const float inv_n = 1.0f / static_cast<float>(mask.size());

  LossAndGradients result;
  result.gradients = zeros_like(model.params);

  // d loss / d logits: (softmax - onehot) / |mask| on masked pixels only.
  ws.delta.resize(layers.size());
  ws.dcols.resize(layers.size());
  MatrixF& top = ws.delta.back();
  top.setZero(classes, pixels);
  const MatrixF& logits = cache.back().out;
  double total = 0.0;
  for (std::size_t p : mask) {
    const auto col = static_cast<Eigen::Index>(p);
    const float* z = logits.col(col).data();
    const double lse = log_sum_exp(z, classes);
    const int y = labels.data[p];
    total += lse - z[y];
    for (int c = 0; c < classes; ++c) {
      const float prob = static_cast<float>(std::exp(static_cast<double>(z[c]) - lse));
      top(c, col) += (prob - (c == y ? 1.0f : 0.0f)) * inv_n;
    }
  }
  result.loss = total / static_cast<double>(mask.size());

  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSpec& l = layers[i];
    MatrixF& delta = ws.delta[i];
    if (l.relu) delta = (cache[i].out.array() > 0.0f).select(delta, 0.0f);
    Tensor& gw = result.gradients[2 * i];
    Tensor& gb = result.gradients[2 * i + 1];
    // Reduce into aligned buffers: Eigen's summation order depends on the
    // destination's alignment, and the result must not.
    ws.grad_w.noalias() = delta * cache[i].cols.transpose();
    ws.grad_b = delta.rowwise().sum();
    Eigen::Map<RowMatrixF>(gw.data.data(), l.out_channels, cache[i].cols.rows()) = ws.grad_w;
    Eigen::Map<Eigen::VectorXf>(gb.data.data(), l.out_channels) = ws.grad_b;
    if (i == 0) break;
    if (l.kernel == 1) {
      ws.delta[i - 1].noalias() = weight_matrix(model.params[2 * i], l).transpose() * delta;
    } else {
      ws.dcols[i].noalias() = weight_matrix(model.params[2 * i], l).transpose() * delta;
      col2im_add(ws.dcols[i], img.height, img.width, l, ws.delta[i - 1]);
    }
  }
  return result;
}

void adam_step(ModelState& model, const TensorList& gradients, const TrainConfig& cfg) {
  cfg.validate();
  if (gradients.size() != model.params.size()) {
    throw ShapeError("adam_step: expected " + std::to_string(model.params.size()) +
                     " gradient tensors, got " + std::to_string(gradients.size()));
  }
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    if (gradients[i].shape != model.params[i].shape || gradients[i].data.size() != model.params[i].data.size()) {
      throw ShapeError("adam_step: gradient '" + gradients[i].name + "' does not match parameter '" +
                       model.params[i].name + "'");
    }
  }
  const std::uint64_t t = model.step + 1;
  const float lr = static_cast<float>(cfg.learning_rate);
  const float decay = static_cast<float>(1.0 - cfg.learning_rate * cfg.weight_decay);
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float c1 = static_cast<float>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const float c2 = static_cast<float>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const float eps = static_cast<float>(cfg.epsilon);
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    auto& theta = model.params[i].data;
    auto& m = model.adam_m[i].data;
    auto& v = model.adam_v[i].data;
    const auto& g = gradients[i].data;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] *= decay;
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / c1;
      const float v_hat = v[j] / c2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  model.step = t;
}

double train_inner(ModelState& model, const ImageTensor& img, const LabelMap& labels,
                   PixelMask mask, const TrainConfig& cfg) {
  cfg.validate();
  double loss = 0.0;
  for (int it = 0; it < cfg.inner_iters; ++it) {
    auto lg = loss_and_gradients(model, img, labels, mask);
    adam_step(model, lg.gradients, cfg);
    loss = lg.loss;
  }
  return loss;
}

std::vector<std::size_t> full_mask(const LabelMap& labels) {
  std::vector<std::size_t> mask;
  mask.reserve(labels.pixels());
  for (std::size_t p = 0; p < labels.pixels(); ++p) {
    if (labels.data[p] != kIgnore) mask.push_back(p);
  }
  return mask;
}

}  // namespace opl
