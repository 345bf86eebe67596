#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "opl/image.hpp"

namespace opl {

/// One same-padded convolution layer; `relu` applies a ReLU to its output.
struct LayerSpec {
  int kernel = 3;
  int in_channels = 0;
  int out_channels = 0;
  int dilation = 1;
  bool relu = true;

  int padding() const { return dilation * (kernel - 1) / 2; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A fully-convolutional architecture. Every layer uses same padding, so the
/// logits have the spatial size of the input.
struct ArchPreset {
  std::string name;
  int num_classes = 0;
  std::vector<LayerSpec> layers;

  /// conv3x3(3->16), conv3x3(16->32), conv3x3 dil 2 (32->32), conv1x1(32->C).
  static ArchPreset micro_a(int num_classes);
  /// conv5x5(3->12), conv3x3(12->24), conv3x3(24->24), conv1x1(24->C).
  static ArchPreset micro_b(int num_classes);
  /// "micro-A" or "micro-B"; anything else is a ConfigError.
  static ArchPreset from_name(const std::string& name, int num_classes);

  std::size_t parameter_count() const;
  /// Half-width of the receptive field of one output pixel.
  int receptive_radius() const;
  /// Throws ConfigError when layers are not chained or padding is not "same".
  void validate() const;

  friend bool operator==(const ArchPreset&, const ArchPreset&) = default;
};

/// Named dense float tensor. Conv weights are laid out [out, kh, kw, in].
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t size() const { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using TensorList = std::vector<Tensor>;

/// Network parameters together with Adam moments and step counter.
struct ModelState {
  ArchPreset preset;
  TensorList params;  // conv{i}.weight, conv{i}.bias for each layer
  TensorList adam_m;
  TensorList adam_v;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  std::size_t parameter_count() const;
  /// Throws ShapeError when a tensor does not match the preset.
  void validate() const;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Pre-softmax scores, row-major pixels with the C class scores contiguous.
struct Logits {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<float> data;

  const float* at(std::size_t pixel) const { return data.data() + pixel * num_classes; }
};

struct TrainConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-4;
  int inner_iters = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Linear (row-major) indices of supervised pixels.
using PixelMask = std::span<const std::size_t>;

/// Expected parameter shapes of `preset` in storage order.
std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes(const ArchPreset& preset);

/// He-uniform kernels, zero biases, zero moments; deterministic in `seed`.
ModelState init_model(const ArchPreset& preset, std::uint64_t seed);

Logits forward(const ModelState& model, const ImageTensor& img);

/// Per-pixel argmax; ties go to the lowest class index.
LabelMap predict(const Logits& logits);

/// Mean cross-entropy over the masked pixels (stable log-softmax).
double sparse_ce_loss(const Logits& logits, const LabelMap& labels, PixelMask mask);

struct LossAndGradients {
  double loss = 0.0;
  TensorList gradients;  // same names and shapes as ModelState::params
};

/// Loss and its exact reverse-mode gradient for every parameter.
LossAndGradients loss_and_gradients(const ModelState& model, const ImageTensor& img,
                                    const LabelMap& labels, PixelMask mask);

inline TensorList backward(const ModelState& model, const ImageTensor& img,
                           const LabelMap& labels, PixelMask mask) {
  return loss_and_gradients(model, img, labels, mask).gradients;
}

/// Decoupled weight decay followed by a bias-corrected Adam update.
void adam_step(ModelState& model, const TensorList& gradients, const TrainConfig& cfg);

/// cfg.inner_iters forward/backward/Adam iterations on a fixed mask.
/// Returns the loss of the last iteration (measured before its update).
double train_inner(ModelState& model, const ImageTensor& img, const LabelMap& labels,
                   PixelMask mask, const TrainConfig& cfg);

/// All non-ignore pixels of `labels` (dense supervision).
std::vector<std::size_t> full_mask(const LabelMap& labels);

// Checkpoint: "MNET", u32 version, length-prefixed preset name, u32 tensor
// count, then per tensor: name, u32 rank, u32 dims, little-endian f32 data.
void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);
/// Same, but the stored tensors must fit `expected` (ShapeError otherwise).
ModelState load_checkpoint(const std::filesystem::path& path, const ArchPreset& expected);

}  // namespace opl
