#pragma once

#include "frontdoor/tensor.hpp"

#include <Eigen/Core>

#include <vector>

namespace frontdoor {

/// C×H×W image stored channel-major, each plane row-major.
template <typename Scalar>
struct BasicImage {
  using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<Plane>;
  using ConstPlaneMap = Eigen::Map<const Plane>;

  Index channels = 0;
  Index height = 0;
  Index width = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  BasicImage() = default;
  BasicImage(Index c, Index h, Index w, Scalar fill = Scalar(0))
      : channels(c), height(h), width(w), data(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Constant(c * h * w, fill)) {}

  Index plane_size() const { return height * width; }
  PlaneMap channel(Index c) { return PlaneMap(data.data() + c * plane_size(), height, width); }
  ConstPlaneMap channel(Index c) const { return ConstPlaneMap(data.data() + c * plane_size(), height, width); }
  Scalar& operator()(Index c, Index y, Index x) { return data[(c * height + y) * width + x]; }
  Scalar operator()(Index c, Index y, Index x) const { return data[(c * height + y) * width + x]; }
  bool same_shape(const BasicImage& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

using Image = BasicImage<double>;

/// Stacks equally shaped images into an N×C×H×W tensor.
Tensor to_batch(const std::vector<Image>& images);
Tensor to_batch(const std::vector<const Image*>& images);
/// Splits an N×C×H×W tensor into images.
std::vector<Image> from_batch(const Tensor& batch);
Image clamp01(Image img);

}  // namespace frontdoor
