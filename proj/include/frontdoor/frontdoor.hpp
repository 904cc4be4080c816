#pragma once

#include "frontdoor/bench.hpp"
#include "frontdoor/config.hpp"
#include "frontdoor/nn.hpp"
#include "frontdoor/nst.hpp"
#include "frontdoor/spectral.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace frontdoor {

/// Conv backbone (three stride-2 conv3x3 + ReLU blocks of widths w, 2w, 4w)
/// and a dense head over C classes.
class Classifier {
 public:
  Classifier(Index channels, Index image_size, Index num_classes, Index width, std::uint64_t seed);

  Tensor logits(const Tensor& x) const;
  Tensor probs(const Tensor& x) const;

  Index num_classes() const { return num_classes_; }
  std::vector<NamedTensor> named_parameters() const { return net_.named_parameters(); }
  std::vector<Tensor> parameters() const { return net_.parameters(); }

 private:
  Sequential net_;
  Index num_classes_;
};

/// Source-domain images available as styles, with optional caches of
/// their spectra and NST encoder features.
class StylePool {
 public:
  StylePool(std::vector<const Image*> images, std::vector<int> domains);

  std::size_t size() const { return images_.size(); }
  const Image& image(std::size_t i) const { return *images_.at(i); }
  int domain(std::size_t i) const { return domains_.at(i); }
  const std::vector<int>& domain_ids() const { return domain_ids_; }
  const std::vector<std::size_t>& members(int domain) const { return members_.at(domain); }

  void cache_spectra();
  void cache_features(const NstModel& model);
  bool has_spectra() const { return !spectra_.empty(); }
  bool has_features() const { return features_.numel() > 0; }
  const SpectralImage<double>& spectrum(std::size_t i) const { return spectra_.at(i); }
  /// Rows of the encoder feature cache.
  Tensor features(std::span<const std::size_t> idx) const;

 private:
  std::vector<const Image*> images_;
  std::vector<int> domains_;
  std::vector<int> domain_ids_;
  std::map<int, std::vector<std::size_t>> members_;
  std::vector<SpectralImage<double>> spectra_;
  Tensor features_;
};

/// k pool indices: i.i.d. uniform, or round-robin over source domains in a
/// random domain order with a uniform draw inside each domain.
std::vector<std::size_t> sample_styles(const StylePool& pool, int k, Sampling strategy, Rng& rng);

struct StyleParams {
  Method method = Method::fast;
  double alpha = 0.7;
  double beta = 0.35;
  double eta = 1.0;
};

/// Content images with optional precomputed encoder features and spectra.
struct ContentBatch {
  Tensor images;  // N×3×H×W
  Tensor features;
  std::vector<const SpectralImage<double>*> spectra;
};

/// Stylized copies of the batch. styles[n] lists the K pool indices for
/// sample n. Returns K tensors (fast, faft) or 2K (fagt: K AdaIN terms then
/// K Fourier terms), each N×3×H×W. Fourier lambdas are drawn term-major.
std::vector<Tensor> stylize_terms(const ContentBatch& batch, const StylePool& pool,
                                  const std::vector<std::vector<std::size_t>>& styles, const StyleParams& params,
                                  const NstModel* nst, Rng& rng);

struct DoPrediction {
  Tensor content_probs;             // F(x), N×C
  std::vector<Tensor> style_probs;  // F of each stylized term, N×C
  Tensor blended;                   // beta F(x) + (1 - beta) mean(style_probs)
};

/// beta * content + (1 - beta) / M * sum(styles).
Tensor blend_probs(const Tensor& content, const std::vector<Tensor>& styles, double beta);
DoPrediction combine(const Tensor& content_probs, std::vector<Tensor> style_probs, double beta);

/// Interventional prediction P(Y | do(x)). Kept on the tape so that losses
/// can backpropagate into the classifier.
DoPrediction predict_do(const Classifier& f, const ContentBatch& batch, const StylePool& pool,
                        const std::vector<std::vector<std::size_t>>& styles, const StyleParams& params,
                        const NstModel* nst, Rng& rng);

/// Cross-entropy of the blended prediction.
Tensor do_loss(const DoPrediction& pred, std::span<const int> labels);

Tensor loss_fast(const Classifier& f, const ContentBatch& batch, std::span<const int> labels, const StylePool& pool,
                 const std::vector<std::vector<std::size_t>>& styles, double alpha, double beta, const NstModel& nst,
                 Rng& rng);
Tensor loss_faft(const Classifier& f, const ContentBatch& batch, std::span<const int> labels, const StylePool& pool,
                 const std::vector<std::vector<std::size_t>>& styles, double eta, double beta, Rng& rng);
Tensor loss_fagt(const Classifier& f, const ContentBatch& batch, std::span<const int> labels, const StylePool& pool,
                 const std::vector<std::vector<std::size_t>>& styles, double alpha, double eta, double beta,
                 const NstModel& nst, Rng& rng);

/// Argmax; ties go to the lowest class index.
int predict_label(std::span<const double> probs);
std::vector<int> predict_labels(const Tensor& probs);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
  std::optional<double> test_acc;
};

/// Source/target view of a dataset for one held-out domain.
struct FoldData {
  std::string heldout;
  std::vector<const bench::Sample*> train;
  std::vector<const bench::Sample*> val;
  std::vector<const bench::Sample*> test;
};

FoldData make_fold(const bench::Dataset& data, int heldout);

/// Accuracy (percent) of the do-prediction (or plain F for erm).
double evaluate_accuracy(const Classifier& f, const std::vector<const bench::Sample*>& samples, const StylePool& pool,
                         const ExperimentConfig& config, const NstModel* nst, Rng& rng);

struct TrainResult {
  Classifier classifier;
  std::vector<EpochMetrics> history;
};

/// Minibatch SGD on the method's loss. Throws DivergenceError on a
/// non-finite loss; the classifier passed to `on_divergence` holds the
/// parameters from before the failing step.
TrainResult train(const ExperimentConfig& config, const FoldData& fold, int num_classes, const NstModel* nst,
                  const std::function<void(const Classifier&)>& on_divergence = {});

struct FoldResult {
  std::string domain;
  double test_acc = 0.0;
  double val_acc = 0.0;
  std::vector<EpochMetrics> history;
};

struct LodoResult {
  std::vector<FoldResult> folds;
  double mean_test_acc = 0.0;
  double mean_val_acc = 0.0;
};

/// Supplies a trained NST model for a held-out domain index.
using NstProvider = std::function<const NstModel&(int heldout)>;

/// Trains the NST model of one fold on its source-domain training images.
NstModel train_fold_nst(const ExperimentConfig& config, const FoldData& fold);

/// Leave-one-domain-out over the configured folds; `jobs` folds run in
/// parallel. NST models come from `nst` (or are trained per fold).
LodoResult evaluate_lodo(const ExperimentConfig& config, const bench::Dataset& data, int jobs = 1,
                         const NstProvider& nst = {});

void write_metrics_csv(std::ostream& out, const LodoResult& result);
/// Deterministic summary (no timing fields).
std::string summary_json(const ExperimentConfig& config, const LodoResult& result);

}  // namespace frontdoor
