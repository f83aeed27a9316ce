// SPDX-License-Identifier: Apache-2.0
//
// 2-D FFT on dense complex matrices, built from Eigen's 1-D FFT module.
// Plans are cached per length in a thread_local FFT object, so concurrent
// runs never share mutable state.

#pragma once

#include <complex>

#include <unsupported/Eigen/FFT>

#include "lensless/common.hpp"

namespace lensless::detail {

template <class Scalar>
using CMat = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
void fft1_columns(CMat<Scalar>& a, bool inverse) {
  thread_local Eigen::FFT<Scalar> fft;
  const Index n = a.rows();
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> tmp(n);
  for (Index j = 0; j < a.cols(); ++j) {
    if (inverse)
      fft.inv(tmp.data(), a.col(j).data(), n);
    else
      fft.fwd(tmp.data(), a.col(j).data(), n);
    a.col(j) = tmp;
  }
}

// In-place 2-D transform; the inverse carries the full 1/(rows*cols) scaling.
template <class Scalar>
void fft2(CMat<Scalar>& a, bool inverse) {
  fft1_columns(a, inverse);
  a.transposeInPlace();
  fft1_columns(a, inverse);
  a.transposeInPlace();
}

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace lensless::detail
