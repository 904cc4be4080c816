#include "frontdoor/spectral.hpp"

#include "frontdoor/rng.hpp"

namespace frontdoor {

Image amplitude_mix(const SpectralImage<double>& content, const SpectralImage<double>& style, double lambda) {
  return clamp01(idft2(mix_amplitude(content, style, lambda)));
}

Image amplitude_mix(const Image& content, const Image& style, double lambda) {
  if (!content.same_shape(style)) throw DimensionError("amplitude_mix: image shapes differ");
  return amplitude_mix(dft2(content), dft2(style), lambda);
}

double sample_lambda(double eta, Rng& rng) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("sample_lambda: eta must lie in [0, 1]");
  return eta * rng.uniform();
}

}  // namespace frontdoor
