#include "frontdoor/frontdoor.hpp"

#include "frontdoor/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace frontdoor {

// ---- classifier -------------------------------------------------------------

Classifier::Classifier(Index channels, Index image_size, Index num_classes, Index width, std::uint64_t seed)
    : num_classes_(num_classes) {
  if (image_size % 8 != 0) throw ValidationError("classifier: image size must be a multiple of 8");
  if (num_classes < 2 || width < 1) throw ValidationError("classifier: needs >= 2 classes and width >= 1");
  Rng rng(seed, "classifier.init");
  net_.emplace<Conv2d>(channels, width, 3, 2, 1, rng);
  net_.emplace<Relu>();
  net_.emplace<Conv2d>(width, 2 * width, 3, 2, 1, rng);
  net_.emplace<Relu>();
  net_.emplace<Conv2d>(2 * width, 4 * width, 3, 2, 1, rng);
  net_.emplace<Relu>();
  net_.emplace<Flatten>();
  const Index s = image_size / 8;
  net_.emplace<Dense>(4 * width * s * s, num_classes, rng);
}

Tensor Classifier::logits(const Tensor& x) const { return net_.forward(x); }

Tensor Classifier::probs(const Tensor& x) const { return softmax(logits(x)); }

// ---- style pool -------------------------------------------------------------

StylePool::StylePool(std::vector<const Image*> images, std::vector<int> domains)
    : images_(std::move(images)), domains_(std::move(domains)) {
  if (images_.size() != domains_.size()) throw DimensionError("style pool: one domain per image required");
  for (std::size_t i = 0; i < domains_.size(); ++i) members_[domains_[i]].push_back(i);
  for (const auto& [d, _] : members_) domain_ids_.push_back(d);
}

void StylePool::cache_spectra() {
  spectra_.clear();
  spectra_.reserve(images_.size());
  for (const Image* img : images_) spectra_.push_back(dft2(*img));
}

void StylePool::cache_features(const NstModel& model) {
  NoGradGuard guard;
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < images_.size(); b += 256) {
    const std::vector<const Image*> chunk(images_.begin() + static_cast<std::ptrdiff_t>(b),
                                          images_.begin() + static_cast<std::ptrdiff_t>(std::min(images_.size(), b + 256)));
    parts.push_back(model.encode(to_batch(chunk)));
  }
  features_ = parts.empty() ? Tensor() : concat_rows(parts);
}

Tensor StylePool::features(std::span<const std::size_t> idx) const {
  if (!has_features()) throw StateError("style pool: encoder features not cached");
  Shape shape = features_.shape();
  const Index row = features_.numel() / shape[0];
  shape[0] = static_cast<Index>(idx.size());
  Array out(static_cast<Index>(idx.size()) * row);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.segment(static_cast<Index>(i) * row, row) = features_.data().segment(static_cast<Index>(idx[i]) * row, row);
  }
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::size_t> sample_styles(const StylePool& pool, int k, Sampling strategy, Rng& rng) {
  if (pool.size() == 0) throw StateError("sample_styles: empty style pool");
  if (k < 1) throw ValidationError("sample_styles: k must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(k));
  if (strategy == Sampling::random) {
    for (int i = 0; i < k; ++i) out.push_back(static_cast<std::size_t>(rng.below(pool.size())));
    return out;
  }
  std::vector<int> order = pool.domain_ids();
  rng.shuffle(order.begin(), order.end());
  for (int i = 0; i < k; ++i) {
    const auto& members = pool.members(order[static_cast<std::size_t>(i) % order.size()]);
    out.push_back(members[static_cast<std::size_t>(rng.below(members.size()))]);
  }
  return out;
}

// ---- do-prediction ----------------------------------------------------------

namespace {

Image image_row(const Tensor& batch, Index n) {
  Image img(batch.dim(1), batch.dim(2), batch.dim(3));
  img.data = batch.data().segment(n * img.data.size(), img.data.size());
  return img;
}

void check_params(const StyleParams& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (!(p.beta >= 0.0 && p.beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
  if (!(p.eta >= 0.0 && p.eta <= 1.0)) throw ValidationError("eta must lie in [0, 1]");
}

}  // namespace

std::vector<Tensor> stylize_terms(const ContentBatch& batch, const StylePool& pool,
                                  const std::vector<std::vector<std::size_t>>& styles, const StyleParams& params,
                                  const NstModel* nst, Rng& rng) {
  check_params(params);
  const Index n = batch.images.dim(0);
  if (static_cast<Index>(styles.size()) != n) throw DimensionError("stylize: one style list per sample required");
  const std::size_t k = styles.front().size();
  if (k == 0) throw ValidationError("stylize: K must be >= 1");
  for (const auto& s : styles)
    if (s.size() != k) throw DimensionError("stylize: every sample needs the same number of styles");

  NoGradGuard guard;
  std::vector<Tensor> terms;
  const bool adain_path = params.method == Method::fast || params.method == Method::fagt;
  const bool fourier_path = params.method == Method::faft || params.method == Method::fagt;
  if (params.method == Method::erm) throw ValidationError("stylize: erm has no style terms");

  if (adain_path) {
    if (nst == nullptr) throw StateError("stylize: the AdaIN path needs an NST model");
    nst->require_trained("stylize");
    const Tensor content = batch.features.numel() > 0 ? batch.features : nst->encode(batch.images);
    std::vector<std::size_t> idx;
    idx.reserve(k * static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < k; ++j)
      for (Index i = 0; i < n; ++i) idx.push_back(styles[static_cast<std::size_t>(i)][j]);
    Tensor style_feats;
    if (pool.has_features()) {
      style_feats = pool.features(idx);
    } else {
      std::vector<const Image*> imgs;
      for (auto i : idx) imgs.push_back(&pool.image(i));
      style_feats = nst->encode(to_batch(imgs));
    }
    const Tensor repeated = concat_rows(std::vector<Tensor>(k, content));
    const Tensor out = nst_stylize_features(*nst, repeated, style_feats, params.alpha);
    for (std::size_t j = 0; j < k; ++j) terms.push_back(slice_rows(out, static_cast<Index>(j) * n, n));
  }

  if (fourier_path) {
    std::vector<SpectralImage<double>> own;
    if (batch.spectra.empty()) {
      for (Index i = 0; i < n; ++i) own.push_back(dft2(image_row(batch.images, i)));
    }
    for (std::size_t j = 0; j < k; ++j) {
      const Index per = batch.images.numel() / n;
      Array values(batch.images.numel());
      for (Index i = 0; i < n; ++i) {
        const double lambda = sample_lambda(params.eta, rng);
        const auto& cs = batch.spectra.empty() ? own[static_cast<std::size_t>(i)] : *batch.spectra[static_cast<std::size_t>(i)];
        const std::size_t s = styles[static_cast<std::size_t>(i)][j];
        const Image mixed = pool.has_spectra() ? amplitude_mix(cs, pool.spectrum(s), lambda)
                                               : amplitude_mix(cs, dft2(pool.image(s)), lambda);
        values.segment(i * per, per) = mixed.data;
      }
      terms.push_back(Tensor(batch.images.shape(), std::move(values)));
    }
  }
  return terms;
}

Tensor blend_probs(const Tensor& content, const std::vector<Tensor>& styles, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
  if (styles.empty()) throw ValidationError("blend: needs at least one style term");
  Tensor acc = styles.front();
  for (std::size_t i = 1; i < styles.size(); ++i) acc = add(acc, styles[i]);
  return add(scale(content, beta), scale(acc, (1.0 - beta) / static_cast<double>(styles.size())));
}

DoPrediction combine(const Tensor& content_probs, std::vector<Tensor> style_probs, double beta) {
  DoPrediction p;
  p.content_probs = content_probs;
  p.blended = blend_probs(content_probs, style_probs, beta);
  p.style_probs = std::move(style_probs);
  return p;
}

DoPrediction predict_do(const Classifier& f, const ContentBatch& batch, const StylePool& pool,
                        const std::vector<std::vector<std::size_t>>& styles, const StyleParams& params,
                        const NstModel* nst, Rng& rng) {
  const auto terms = stylize_terms(batch, pool, styles, params, nst, rng);
  std::vector<Tensor> inputs{batch.images};
  inputs.insert(inputs.end(), terms.begin(), terms.end());
  const Tensor probs = f.probs(concat_rows(inputs));
  const Index n = batch.images.dim(0);
  std::vector<Tensor> style_probs;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    style_probs.push_back(slice_rows(probs, static_cast<Index>(t + 1) * n, n));
  }
  return combine(slice_rows(probs, 0, n), std::move(style_probs), params.beta);
}

Tensor do_loss(const DoPrediction& pred, std::span<const int> labels) {
  Tensor loss = nll_from_probs(pred.blended, labels);
  if (!std::isfinite(loss.item())) throw DivergenceError("do_loss: non-finite loss");
  return loss;
}

Tensor loss_fast(const Classifier& f, const ContentBatch& batch, std::span<const int> labels, const StylePool& pool,
                 const std::vector<std::vector<std::size_t>>& styles, double alpha, double beta, const NstModel& nst,
                 Rng& rng) {
  return do_loss(predict_do(f, batch, pool, styles, {Method::fast, alpha, beta, 0.0}, &nst, rng), labels);
}

Tensor loss_faft(const Classifier& f, const ContentBatch& batch, std::span<const int> labels, const StylePool& pool,
                 const std::vector<std::vector<std::size_t>>& styles, double eta, double beta, Rng& rng) {
  return do_loss(predict_do(f, batch, pool, styles, {Method::faft, 0.0, beta, eta}, nullptr, rng), labels);
}

Tensor loss_fagt(const Classifier& f, const ContentBatch& batch, std::span<const int> labels, const StylePool& pool,
                 const std::vector<std::vector<std::size_t>>& styles, double alpha, double eta, double beta,
                 const NstModel& nst, Rng& rng) {
  return do_loss(predict_do(f, batch, pool, styles, {Method::fagt, alpha, beta, eta}, &nst, rng), labels);
}

int predict_label(std::span<const double> probs) {
  int best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

std::vector<int> predict_labels(const Tensor& probs) {
  if (probs.rank() != 2) throw DimensionError("predict_labels: expected N×C probabilities");
  const Index n = probs.dim(0), c = probs.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = predict_label(std::span<const double>(probs.data().data() + i * c, static_cast<std::size_t>(c)));
  }
  return out;
}

// ---- training ---------------------------------------------------------------

FoldData make_fold(const bench::Dataset& data, int heldout) {
  if (data.domains.size() < 2) throw ValidationError("lodo: needs at least two domains");
  if (heldout < 0 || heldout >= static_cast<int>(data.domains.size())) throw ValidationError("lodo: bad held-out index");
  FoldData fold;
  fold.heldout = data.domains[static_cast<std::size_t>(heldout)].name;
  for (int d = 0; d < static_cast<int>(data.domains.size()); ++d) {
    const auto& dom = data.domains[static_cast<std::size_t>(d)];
    if (d == heldout) {
      for (const auto& s : dom.test) fold.test.push_back(&s);
    } else {
      for (const auto& s : dom.train) fold.train.push_back(&s);
      for (const auto& s : dom.val) fold.val.push_back(&s);
    }
  }
  return fold;
}

namespace {

StyleParams style_params(const ExperimentConfig& c) { return {c.method, c.alpha, c.beta, c.eta}; }

StylePool make_pool(const std::vector<const bench::Sample*>& samples) {
  std::vector<const Image*> imgs;
  std::vector<int> doms;
  for (const auto* s : samples) {
    imgs.push_back(&s->image);
    doms.push_back(s->domain);
  }
  return StylePool(std::move(imgs), std::move(doms));
}

std::vector<std::vector<std::size_t>> draw_styles(const StylePool& pool, const ExperimentConfig& c, Index n, Rng& rng) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(sample_styles(pool, c.k, c.sampling, rng));
  return out;
}

}  // namespace

double evaluate_accuracy(const Classifier& f, const std::vector<const bench::Sample*>& samples, const StylePool& pool,
                         const ExperimentConfig& config, const NstModel* nst, Rng& rng) {
  if (samples.empty()) throw ValidationError("evaluate: no samples");
  NoGradGuard guard;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < samples.size(); b += 256) {
    const std::size_t e = std::min(samples.size(), b + 256);
    std::vector<const Image*> imgs;
    for (std::size_t i = b; i < e; ++i) imgs.push_back(&samples[i]->image);
    ContentBatch batch{to_batch(imgs), {}, {}};
    std::vector<int> pred;
    if (config.method == Method::erm) {
      pred = predict_labels(f.probs(batch.images));
    } else {
      const auto styles = draw_styles(pool, config, static_cast<Index>(imgs.size()), rng);
      pred = predict_labels(predict_do(f, batch, pool, styles, style_params(config), nst, rng).blended);
    }
    for (std::size_t i = b; i < e; ++i) correct += pred[i - b] == samples[i]->label;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train(const ExperimentConfig& config, const FoldData& fold, int num_classes, const NstModel* nst,
                  const std::function<void(const Classifier&)>& on_divergence) {
  validate_config(config);
  if (fold.train.empty()) throw ValidationError("train: empty training split");
  if (uses_nst(config.method)) {
    if (nst == nullptr) throw StateError("train: method " + std::string(method_name(config.method)) + " needs an NST model");
    nst->require_trained("train");
  }
  const Index size = fold.train.front()->image.height;
  TrainResult result{Classifier(3, size, num_classes, config.width, classifier_seed(config, fold.heldout)), {}};
  Classifier& f = result.classifier;
  const auto params = f.parameters();
  Sgd opt(params, config.lr, config.momentum, config.weight_decay);

  StylePool pool = make_pool(fold.train);
  if (config.method == Method::faft || config.method == Method::fagt) pool.cache_spectra();
  if (uses_nst(config.method)) pool.cache_features(*nst);
  const StyleParams sp = style_params(config);

  Rng order_rng(classifier_seed(config, fold.heldout), "order");
  Rng style_rng(style_seed(config, fold.heldout), "train");
  std::vector<std::size_t> order(fold.train.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_lr(scheduled_lr(config.schedule, config.lr, epoch, config.epochs, config.step_size, config.gamma));
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      std::vector<const Image*> imgs;
      std::vector<int> labels;
      for (auto i : idx) {
        imgs.push_back(&fold.train[i]->image);
        labels.push_back(fold.train[i]->label);
      }
      ContentBatch batch{to_batch(imgs), {}, {}};
      Tensor loss;
      Tensor probs;
      opt.zero_grad();
      if (config.method == Method::erm) {
        auto ce = softmax_crossentropy(f.logits(batch.images), labels);
        loss = ce.loss;
        probs = ce.probs;
      } else {
        if (pool.has_features()) batch.features = pool.features(idx);
        if (pool.has_spectra())
          for (auto i : idx) batch.spectra.push_back(&pool.spectrum(i));
        const auto styles = draw_styles(pool, config, static_cast<Index>(idx.size()), style_rng);
        const auto pred = predict_do(f, batch, pool, styles, sp, nst, style_rng);
        loss = nll_from_probs(pred.blended, labels);
        probs = pred.blended;
      }
      if (!std::isfinite(loss.item())) {
        if (on_divergence) on_divergence(f);
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", fold " + fold.heldout);
      }
      loss.backward();
      try {
        opt.step();
      } catch (const DivergenceError&) {
        if (on_divergence) on_divergence(f);
        throw;
      }
      loss_sum += loss.item() * static_cast<double>(idx.size());
      const auto pred_labels = predict_labels(probs);
      for (std::size_t i = 0; i < labels.size(); ++i) correct += pred_labels[i] == labels[i];
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(order.size());
    const bool last = epoch + 1 == config.epochs;
    if (last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)) {
      Rng val_rng(style_seed(config, fold.heldout), "eval/val/" + std::to_string(epoch));
      Rng test_rng(style_seed(config, fold.heldout), "eval/test/" + std::to_string(epoch));
      if (!fold.val.empty()) m.val_acc = evaluate_accuracy(f, fold.val, pool, config, nst, val_rng);
      if (!fold.test.empty()) m.test_acc = evaluate_accuracy(f, fold.test, pool, config, nst, test_rng);
    }
    result.history.push_back(m);
  }
  return result;
}

NstModel train_fold_nst(const ExperimentConfig& config, const FoldData& fold) {
  NstModel model(config.nst_base_channels, nst_seed(config, fold.heldout));
  NstTrainOptions opts = config.nst;
  opts.seed = nst_seed(config, fold.heldout);
  std::vector<Image> imgs;
  std::vector<int> doms;
  imgs.reserve(fold.train.size());
  for (const auto* s : fold.train) {
    imgs.push_back(s->image);
    doms.push_back(s->domain);
  }
  train_nst(model, imgs, doms, opts);
  return model;
}

LodoResult evaluate_lodo(const ExperimentConfig& config, const bench::Dataset& data, int jobs, const NstProvider& nst) {
  validate_config(config);
  if (data.domains.size() < 2) throw ValidationError("lodo: needs at least two domains");
  std::vector<int> heldouts;
  if (config.folds.empty()) {
    for (int d = 0; d < static_cast<int>(data.domains.size()); ++d) heldouts.push_back(d);
  } else {
    for (const auto& name : config.folds) {
      auto it = std::find_if(data.domains.begin(), data.domains.end(), [&](const auto& d) { return d.name == name; });
      if (it == data.domains.end()) throw ValidationError("lodo: unknown fold domain '" + name + "'");
      heldouts.push_back(static_cast<int>(it - data.domains.begin()));
    }
  }
  LodoResult result;
  result.folds.resize(heldouts.size());
  std::vector<std::exception_ptr> errors(heldouts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < heldouts.size(); i = next++) {
      try {
        const FoldData fold = make_fold(data, heldouts[i]);
        std::optional<NstModel> own;
        const NstModel* model = nullptr;
        if (uses_nst(config.method)) {
          if (nst) {
            model = &nst(heldouts[i]);
          } else {
            own.emplace(train_fold_nst(config, fold));
            model = &*own;
          }
        }
        auto trained = train(config, fold, data.num_classes(), model);
        FoldResult fr;
        fr.domain = fold.heldout;
        fr.history = std::move(trained.history);
        fr.test_acc = fr.history.back().test_acc.value_or(0.0);
        fr.val_acc = fr.history.back().val_acc.value_or(0.0);
        result.folds[i] = std::move(fr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(heldouts.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const auto& f : result.folds) {
    result.mean_test_acc += f.test_acc;
    result.mean_val_acc += f.val_acc;
  }
  result.mean_test_acc /= static_cast<double>(result.folds.size());
  result.mean_val_acc /= static_cast<double>(result.folds.size());
  return result;
}

void write_metrics_csv(std::ostream& out, const LodoResult& result) {
  out << "fold_domain,epoch,train_loss,train_acc,val_acc,test_acc\n";
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v).dump() : std::string(); };
  for (const auto& f : result.folds) {
    for (const auto& m : f.history) {
      out << f.domain << ',' << m.epoch << ',' << nlohmann::json(m.train_loss).dump() << ','
          << nlohmann::json(m.train_acc).dump() << ',' << opt(m.val_acc) << ',' << opt(m.test_acc) << '\n';
    }
  }
}

std::string summary_json(const ExperimentConfig& config, const LodoResult& result) {
  nlohmann::ordered_json j;
  j["method"] = method_name(config.method);
  j["seed"] = config.seed;
  j["config"] = echo_config(config);
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : result.folds) {
    j["folds"].push_back({{"domain", f.domain}, {"test_acc", f.test_acc}, {"val_acc", f.val_acc}});
  }
  j["mean_test_acc"] = result.mean_test_acc;
  j["mean_val_acc"] = result.mean_val_acc;
  return j.dump(2) + "\n";
}

}  // namespace frontdoor
