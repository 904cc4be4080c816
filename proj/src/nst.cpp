#include "frontdoor/nst.hpp"

#include "frontdoor/checkpoint.hpp"
#include "frontdoor/errors.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace frontdoor {

namespace {

constexpr double kStatsEps = 1e-8;

Tensor clamp01(const Tensor& t) {
  return Tensor(t.shape(), t.data().cwiseMax(0.0).cwiseMin(1.0));
}

void set_requires_grad(const std::vector<Tensor>& params, bool on) {
  for (Tensor p : params) p.set_requires_grad(on);
}

}  // namespace

NstModel::NstModel(Index base_channels, std::uint64_t seed) : base_channels_(base_channels) {
  if (base_channels < 1) throw ValidationError("nst: base_channels must be >= 1");
  Rng rng(seed, "nst.init");
  const Index w = base_channels;
  const Index widths[] = {3, w, 2 * w, 4 * w};
  const Index strides[] = {1, 2, 2};
  for (int b = 0; b < 3; ++b) {
    Sequential block;
    block.emplace<Conv2d>(widths[b], widths[b + 1], 3, strides[b], 1, rng);
    block.emplace<Relu>();
    encoder_.push_back(std::move(block));
  }
  decoder_.emplace<Conv2d>(4 * w, 2 * w, 3, 1, 1, rng);
  decoder_.emplace<Relu>();
  decoder_.emplace<UpsampleNearest>(2);
  decoder_.emplace<Conv2d>(2 * w, w, 3, 1, 1, rng);
  decoder_.emplace<Relu>();
  decoder_.emplace<UpsampleNearest>(2);
  decoder_.emplace<Conv2d>(w, 3, 3, 1, 1, rng);
}

std::vector<Tensor> NstModel::encode_layers(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw DimensionError("nst: expected N×3×H×W, got " + shape_string(x.shape()));
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) throw DimensionError("nst: H and W must be divisible by 4");
  std::vector<Tensor> out;
  Tensor h = x;
  for (const auto& block : encoder_) {
    h = block.forward(h);
    out.push_back(h);
  }
  return out;
}

Tensor NstModel::encode(const Tensor& x) const { return encode_layers(x).back(); }

Tensor NstModel::decode(const Tensor& z) const {
  if (z.rank() != 4 || z.dim(1) != feature_channels()) {
    throw DimensionError("nst: expected N×" + std::to_string(feature_channels()) + "×h×w features, got " +
                         shape_string(z.shape()));
  }
  return decoder_.forward(z);
}

std::vector<NamedTensor> NstModel::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t b = 0; b < encoder_.size(); ++b) {
    for (auto& [name, t] : encoder_[b].named_parameters()) out.emplace_back("encoder." + std::to_string(b) + "." + name, t);
  }
  for (auto& [name, t] : decoder_.named_parameters()) out.emplace_back("decoder." + name, t);
  return out;
}

std::vector<Tensor> NstModel::encoder_parameters() const {
  std::vector<Tensor> out;
  for (const auto& block : encoder_)
    for (auto& t : block.parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor> NstModel::decoder_parameters() const { return decoder_.parameters(); }

void NstModel::require_trained(const char* who) const {
  if (!trained_) throw StateError(std::string(who) + ": NST model is untrained");
}

void NstModel::save(const std::filesystem::path& path) const {
  auto records = named_parameters();
  records.emplace_back("meta.base_channels", Tensor::scalar(static_cast<double>(base_channels_)));
  records.emplace_back("meta.trained", Tensor::scalar(trained_ ? 1.0 : 0.0));
  save_checkpoint(path, records);
}

NstModel NstModel::load(const std::filesystem::path& path) {
  const auto records = load_checkpoint(path);
  double base = -1.0, trained = 0.0;
  for (const auto& [name, t] : records) {
    if (name == "meta.base_channels") base = t.item();
    if (name == "meta.trained") trained = t.item();
  }
  if (base < 1.0 || base != std::floor(base)) throw IoError("nst checkpoint " + path.string() + ": missing meta.base_channels");
  NstModel model(static_cast<Index>(base));
  assign_from(records, model.named_parameters());
  model.trained_ = trained == 1.0;
  return model;
}

Tensor style_stats_loss(const std::vector<Tensor>& generated, const std::vector<Tensor>& target) {
  if (generated.size() != target.size() || generated.empty()) throw DimensionError("style loss: layer count mismatch");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < generated.size(); ++l) {
    const Tensor& g = generated[l];
    const Tensor t = target[l].detach();
    total = add(total, mse(channel_mean(g), channel_mean(t)));
    total = add(total, mse(channel_std(g, kStatsEps), channel_std(t, kStatsEps)));
  }
  return scale(total, 1.0 / static_cast<double>(generated.size()));
}

NstTrainHistory train_nst(NstModel& model, const std::vector<Image>& images, const std::vector<int>& domains,
                          const NstTrainOptions& options) {
  if (images.size() != domains.size()) throw DimensionError("train_nst: one domain tag per image required");
  if (std::set<int>(domains.begin(), domains.end()).size() < 2) {
    throw ValidationError("train_nst: needs images from at least two source domains");
  }
  if (options.batch_size < 1 || options.ae_epochs < 0 || options.style_epochs < 0) {
    throw ValidationError("train_nst: invalid epochs or batch size");
  }
  Rng rng(options.seed, "nst.train");
  const Index n = static_cast<Index>(images.size());
  const Index per_epoch =
      options.samples_per_epoch > 0 ? std::min(options.samples_per_epoch, n) : n;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::vector<Index> style_order(order.size());

  auto batch_of = [&](const std::vector<Index>& idx, Index begin, Index count) {
    std::vector<const Image*> ptrs;
    for (Index i = begin; i < begin + count; ++i) ptrs.push_back(&images[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    return to_batch(ptrs);
  };
  auto check = [](double loss, const char* phase, int epoch) {
    if (!std::isfinite(loss)) {
      throw DivergenceError(std::string("train_nst: non-finite ") + phase + " loss at epoch " + std::to_string(epoch));
    }
  };

  NstTrainHistory history;
  const auto all_params = [&] {
    std::vector<Tensor> p = model.encoder_parameters();
    for (auto& t : model.decoder_parameters()) p.push_back(t);
    return p;
  }();

  Adam ae_opt(all_params, options.lr);
  for (int epoch = 0; epoch < options.ae_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    int batches = 0;
    for (Index b = 0; b < per_epoch; b += options.batch_size) {
      const Index count = std::min(options.batch_size, per_epoch - b);
      const Tensor x = batch_of(order, b, count);
      ae_opt.zero_grad();
      Tensor loss = scale(mse(model.decode(model.encode(x)), x), options.recon_weight);
      check(loss.item(), "reconstruction", epoch);
      loss.backward();
      ae_opt.step();
      total += loss.item();
      ++batches;
    }
    history.epoch_loss.push_back(total / batches);
  }
  history.ae_epochs = options.ae_epochs;

  if (options.style_weight > 0.0 && options.style_epochs > 0) {
    set_requires_grad(model.encoder_parameters(), false);
    Adam opt(model.decoder_parameters(), options.lr);
    for (int epoch = 0; epoch < options.style_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), Index{0});
      rng.shuffle(order.begin(), order.end());
      std::iota(style_order.begin(), style_order.end(), Index{0});
      rng.shuffle(style_order.begin(), style_order.end());
      double total = 0.0;
      int batches = 0;
      for (Index b = 0; b < per_epoch; b += options.batch_size) {
        const Index count = std::min(options.batch_size, per_epoch - b);
        const Tensor x = batch_of(order, b, count);
        const Tensor xs = batch_of(style_order, b, count);
        std::vector<Tensor> style_layers;
        Tensor z, target;
        {
          NoGradGuard guard;
          style_layers = model.encode_layers(xs);
          z = model.encode(x);
          target = adain(z, style_layers.back());
        }
        opt.zero_grad();
        const Tensor out = model.decode(target);
        const auto out_layers = model.encode_layers(out);
        Tensor loss = scale(mse(out_layers.back(), target), options.content_weight);
        loss = add(loss, scale(style_stats_loss(out_layers, style_layers), options.style_weight));
        if (options.recon_weight > 0.0) loss = add(loss, scale(mse(model.decode(z), x), options.recon_weight));
        check(loss.item(), "style", epoch);
        loss.backward();
        opt.step();
        total += loss.item();
        ++batches;
      }
      history.epoch_loss.push_back(total / batches);
    }
    set_requires_grad(model.encoder_parameters(), true);
  }
  model.mark_trained();
  return history;
}

Tensor nst_stylize_features(const NstModel& model, const Tensor& content_features, const Tensor& style_features,
                            double alpha) {
  model.require_trained("nst_stylize");
  NoGradGuard guard;
  const Tensor mixed = interpolate_style(adain(content_features, style_features), content_features, alpha);
  return clamp01(model.decode(mixed));
}

Tensor nst_stylize(const NstModel& model, const Tensor& content, const Tensor& style, double alpha) {
  model.require_trained("nst_stylize");
  if (content.rank() != 4 || style.rank() != 4 || content.dim(1) != style.dim(1)) {
    throw DimensionError("nst_stylize: content and style must be N×C×H×W with equal C");
  }
  NoGradGuard guard;
  return nst_stylize_features(model, model.encode(content), model.encode(style), alpha);
}

Image nst_stylize(const NstModel& model, const Image& content, const Image& style, double alpha) {
  return from_batch(nst_stylize(model, to_batch(std::vector<const Image*>{&content}),
                                to_batch(std::vector<const Image*>{&style}), alpha))
      .front();
}

double reconstruction_rms(const NstModel& model, const std::vector<Image>& images) {
  NoGradGuard guard;
  double sq = 0.0;
  Index count = 0;
  for (std::size_t b = 0; b < images.size(); b += 64) {
    std::vector<const Image*> ptrs;
    for (std::size_t i = b; i < std::min(images.size(), b + 64); ++i) ptrs.push_back(&images[i]);
    const Tensor x = to_batch(ptrs);
    const Tensor r = model.decode(model.encode(x));
    sq += (r.data() - x.data()).square().sum();
    count += x.numel();
  }
  return std::sqrt(sq / static_cast<double>(count));
}

}  // namespace frontdoor
