#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace sslts {

inline int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT. Length must be a power of two. Twiddles are
// computed from double-precision trig regardless of T so float and double
// instantiations agree to float rounding.
template <class T>
void fft_inplace(std::complex<T>* a, int64_t n, bool inverse) {
  if (n <= 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: length must be a power of two");
  for (int64_t i = 1, j = 0; i < n; ++i) {
    int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int64_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int64_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int64_t k = 0; k < len / 2; ++k) {
        std::complex<double> u(a[i + k].real(), a[i + k].imag());
        std::complex<double> v(a[i + k + len / 2].real(), a[i + k + len / 2].imag());
        v *= w;
        std::complex<double> x = u + v;
        std::complex<double> y = u - v;
        a[i + k] = std::complex<T>(static_cast<T>(x.real()), static_cast<T>(x.imag()));
        a[i + k + len / 2] = std::complex<T>(static_cast<T>(y.real()), static_cast<T>(y.imag()));
        w *= wl;
      }
    }
  }
  if (inverse) {
    T inv = T(1) / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) a[i] *= inv;
  }
}

template <class T>
void fft_inplace(std::vector<std::complex<T>>& a, bool inverse) {
  fft_inplace(a.data(), static_cast<int64_t>(a.size()), inverse);
}

}  // namespace sslts
