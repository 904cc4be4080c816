#pragma once

#include "frontdoor/adain.hpp"
#include "frontdoor/image.hpp"
#include "frontdoor/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace frontdoor {

/// Toy AdaIN style-transfer network.
///
/// Encoder: three conv3x3 + ReLU blocks with widths w, 2w, 4w and strides
/// 1, 2, 2, so 3×H×W maps to 4w×H/4×W/4. The decoder mirrors it with
/// nearest-neighbour upsampling.
class NstModel {
 public:
  explicit NstModel(Index base_channels = 8, std::uint64_t seed = 0);

  Index base_channels() const { return base_channels_; }
  Index feature_channels() const { return 4 * base_channels_; }

  /// Deepest encoder features of an N×3×H×W batch (H, W divisible by 4).
  Tensor encode(const Tensor& x) const;
  /// Outputs of every encoder block, shallow to deep.
  std::vector<Tensor> encode_layers(const Tensor& x) const;
  Tensor decode(const Tensor& z) const;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> encoder_parameters() const;
  std::vector<Tensor> decoder_parameters() const;

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  void require_trained(const char* who) const;

  void save(const std::filesystem::path& path) const;
  static NstModel load(const std::filesystem::path& path);

 private:
  Index base_channels_;
  std::vector<Sequential> encoder_;
  Sequential decoder_;
  bool trained_ = false;
};

struct NstTrainOptions {
  /// Phase 1: encoder and decoder as an autoencoder on reconstruction loss.
  int ae_epochs = 8;
  /// Phase 2: encoder frozen; decoder on recon + content + style losses.
  int style_epochs = 4;
  double lr = 2e-3;
  Index batch_size = 32;
  double recon_weight = 1.0;
  double content_weight = 1.0;
  /// 0 skips phase 2 (reconstruction-only training).
  double style_weight = 1.0;
  /// Images drawn per epoch (0 = the whole pool).
  Index samples_per_epoch = 0;
  std::uint64_t seed = 0;
};

struct NstTrainHistory {
  /// Mean minimized objective per epoch, both phases in order.
  std::vector<double> epoch_loss;
  /// Number of leading entries belonging to phase 1.
  int ae_epochs = 0;
};

/// Trains on source-domain images; `domains` tags each image and must
/// contain at least two distinct values.
NstTrainHistory train_nst(NstModel& model, const std::vector<Image>& images, const std::vector<int>& domains,
                          const NstTrainOptions& options);

/// Mean over shallow-to-deep layers of per-channel mean/std squared errors.
Tensor style_stats_loss(const std::vector<Tensor>& generated, const std::vector<Tensor>& target);

/// D(interpolate_style(adain(E(x), E(x')), E(x), alpha)) with pixels clamped
/// to [0, 1]. Batched over N×3×H×W content/style tensors of equal N.
Tensor nst_stylize(const NstModel& model, const Tensor& content, const Tensor& style, double alpha);
/// Same with precomputed encoder features.
Tensor nst_stylize_features(const NstModel& model, const Tensor& content_features, const Tensor& style_features,
                            double alpha);
Image nst_stylize(const NstModel& model, const Image& content, const Image& style, double alpha);

/// ‖D(E(x)) - x‖ RMS over a set of images.
double reconstruction_rms(const NstModel& model, const std::vector<Image>& images);

}  // namespace frontdoor
