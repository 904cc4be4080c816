#pragma once

#include "frontdoor/errors.hpp"
#include "frontdoor/image.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <vector>

namespace frontdoor {

/// Amplitude/phase split of a 2-D spectrum, F = A * exp(-j * P).
/// The spectrum is unshifted (DC at [0, 0]).
template <typename Scalar>
struct SpectralChannel {
  using Plane = typename BasicImage<Scalar>::Plane;
  Plane amplitude;
  Plane phase;
};

template <typename Scalar>
struct SpectralImage {
  std::vector<SpectralChannel<Scalar>> channels;
};

namespace detail {

template <typename Scalar>
using ComplexPlane = Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// In-place separable 2-D transform: rows, then columns.
template <typename Scalar>
void fft2_inplace(ComplexPlane<Scalar>& a, bool inverse) {
  Eigen::FFT<Scalar> fft;
  const Index h = a.rows(), w = a.cols();
  std::vector<std::complex<Scalar>> in, out;
  in.resize(static_cast<std::size_t>(w));
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) in[static_cast<std::size_t>(c)] = a(r, c);
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index c = 0; c < w; ++c) a(r, c) = out[static_cast<std::size_t>(c)];
  }
  in.resize(static_cast<std::size_t>(h));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) in[static_cast<std::size_t>(r)] = a(r, c);
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index r = 0; r < h; ++r) a(r, c) = out[static_cast<std::size_t>(r)];
  }
}

}  // namespace detail

/// Full 2-D DFT of a real plane, split into amplitude and phase.
template <typename Derived>
SpectralChannel<typename Derived::Scalar> dft2(const Eigen::ArrayBase<Derived>& plane) {
  using Scalar = typename Derived::Scalar;
  if (plane.rows() < 1 || plane.cols() < 1) throw ValidationError("dft2: image must be at least 1x1");
  detail::ComplexPlane<Scalar> a = plane.template cast<std::complex<Scalar>>();
  detail::fft2_inplace<Scalar>(a, false);
  SpectralChannel<Scalar> s;
  s.amplitude = a.abs();
  s.phase = -a.arg();
  return s;
}

/// Inverse DFT of A * exp(-j P); the imaginary residue is dropped.
template <typename Scalar>
typename BasicImage<Scalar>::Plane idft2(const SpectralChannel<Scalar>& s) {
  if (s.amplitude.rows() != s.phase.rows() || s.amplitude.cols() != s.phase.cols()) {
    throw DimensionError("idft2: amplitude and phase shapes differ");
  }
  detail::ComplexPlane<Scalar> a(s.amplitude.rows(), s.amplitude.cols());
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < a.cols(); ++c) a(r, c) = std::polar(s.amplitude(r, c), -s.phase(r, c));
  detail::fft2_inplace<Scalar>(a, true);
  return a.real();
}

template <typename Scalar>
SpectralImage<Scalar> dft2(const BasicImage<Scalar>& img) {
  SpectralImage<Scalar> out;
  for (Index c = 0; c < img.channels; ++c) out.channels.push_back(dft2(img.channel(c)));
  return out;
}

template <typename Scalar>
BasicImage<Scalar> idft2(const SpectralImage<Scalar>& spec) {
  if (spec.channels.empty()) throw ValidationError("idft2: empty spectrum");
  const Index h = spec.channels[0].amplitude.rows(), w = spec.channels[0].amplitude.cols();
  BasicImage<Scalar> img(static_cast<Index>(spec.channels.size()), h, w);
  for (Index c = 0; c < img.channels; ++c) img.channel(c) = idft2(spec.channels[static_cast<std::size_t>(c)]);
  return img;
}

/// Keeps the content phase and mixes amplitudes:
/// A = (1 - lambda) A(content) + lambda A(style).
template <typename Scalar>
SpectralImage<Scalar> mix_amplitude(const SpectralImage<Scalar>& content, const SpectralImage<Scalar>& style,
                                    Scalar lambda) {
  if (content.channels.size() != style.channels.size()) throw DimensionError("amplitude_mix: channel count differs");
  if (!(lambda >= Scalar(0) && lambda <= Scalar(1))) throw ValidationError("amplitude_mix: lambda must lie in [0, 1]");
  SpectralImage<Scalar> out;
  for (std::size_t c = 0; c < content.channels.size(); ++c) {
    const auto& a = content.channels[c];
    const auto& b = style.channels[c];
    if (a.amplitude.rows() != b.amplitude.rows() || a.amplitude.cols() != b.amplitude.cols()) {
      throw DimensionError("amplitude_mix: spatial shapes differ");
    }
    out.channels.push_back({(Scalar(1) - lambda) * a.amplitude + lambda * b.amplitude, a.phase});
  }
  return out;
}

/// Fourier style transfer with precomputed spectra; pixels clamped to [0, 1].
Image amplitude_mix(const SpectralImage<double>& content, const SpectralImage<double>& style, double lambda);
Image amplitude_mix(const Image& content, const Image& style, double lambda);

class Rng;
/// lambda ~ U(0, eta).
double sample_lambda(double eta, Rng& rng);

}  // namespace frontdoor
