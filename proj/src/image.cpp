#include "frontdoor/image.hpp"

#include "frontdoor/errors.hpp"

namespace frontdoor {

Tensor to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ValidationError("to_batch: no images");
  const Image& first = *images.front();
  Array values(static_cast<Index>(images.size()) * first.data.size());
  Index offset = 0;
  for (const Image* img : images) {
    if (!img->same_shape(first)) throw DimensionError("to_batch: images differ in shape");
    values.segment(offset, img->data.size()) = img->data;
    offset += img->data.size();
  }
  return Tensor({static_cast<Index>(images.size()), first.channels, first.height, first.width}, std::move(values));
}

Tensor to_batch(const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_batch(ptrs);
}

std::vector<Image> from_batch(const Tensor& batch) {
  if (batch.rank() != 4) throw DimensionError("from_batch: expected N×C×H×W, got " + shape_string(batch.shape()));
  std::vector<Image> out;
  const Index n = batch.dim(0);
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Image img(batch.dim(1), batch.dim(2), batch.dim(3));
    img.data = batch.data().segment(i * img.data.size(), img.data.size());
    out.push_back(std::move(img));
  }
  return out;
}

Image clamp01(Image img) {
  img.data = img.data.cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

}  // namespace frontdoor
