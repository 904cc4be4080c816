#include "frontdoor/adain.hpp"

namespace frontdoor {

namespace {

Tensor as_batch(const Tensor& t, const char* what) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) return reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)});
  throw DimensionError(std::string(what) + ": expected C×H×W or N×C×H×W, got " + shape_string(t.shape()));
}

}  // namespace

FeatureStats<double> channel_stats(const Tensor& z) {
  if (!(z.rank() == 3 || (z.rank() == 4 && z.dim(0) == 1))) {
    throw DimensionError("channel_stats: expected C×H×W, got " + shape_string(z.shape()));
  }
  const Index c = z.dim(z.rank() - 3);
  const Index hw = z.dim(z.rank() - 2) * z.dim(z.rank() - 1);
  return channel_stats(Eigen::Map<const Eigen::MatrixXd>(z.data().data(), hw, c));
}

Tensor adain(const Tensor& z, const Tensor& style, double eps) {
  const Tensor zb = as_batch(z, "adain");
  const Tensor sb = as_batch(style, "adain").detach();
  if (zb.dim(0) != sb.dim(0)) throw DimensionError("adain: batch sizes differ");
  if (zb.dim(1) != sb.dim(1)) {
    throw DimensionError("adain: channel mismatch (" + std::to_string(zb.dim(1)) + " vs " + std::to_string(sb.dim(1)) +
                         ")");
  }
  const Tensor mu = channel_broadcast(channel_mean(zb), zb.shape());
  const Tensor sd = channel_broadcast(channel_std(zb, eps), zb.shape());
  Tensor s_mu, s_sd;
  {
    NoGradGuard guard;
    s_mu = channel_broadcast(channel_mean(sb), zb.shape());
    s_sd = channel_broadcast(channel_std(sb, 0.0), zb.shape());
  }
  Tensor out = add(mul(s_sd, div(sub(zb, mu), sd)), s_mu);
  return z.rank() == 3 ? reshape(out, z.shape()) : out;
}

Tensor interpolate_style(const Tensor& stylized, const Tensor& content, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("interpolate_style: alpha must lie in [0, 1]");
  if (stylized.shape() != content.shape()) {
    throw DimensionError("interpolate_style: shapes " + shape_string(stylized.shape()) + " and " +
                         shape_string(content.shape()) + " differ");
  }
  if (alpha == 0.0) return content;
  if (alpha == 1.0) return stylized;
  return add(scale(stylized, alpha), scale(content, 1.0 - alpha));
}

}  // namespace frontdoor
