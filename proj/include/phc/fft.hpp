#pragma once

#include "core.hpp"

#include <fftw3.h>

#include <map>
#include <memory>

namespace phc {

/// Out-of-place complex FFT of fixed length. Transforms are unnormalized;
/// `forward` uses e^{-2 pi i jk/n}.
class fft_plan {
 public:
  explicit fft_plan(int n) : n_(n) {
    if (n < 1) fail(error_kind::invalid_argument, "fft length must be positive");
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto* a = fftw_alloc_complex(static_cast<std::size_t>(n));
    auto* b = fftw_alloc_complex(static_cast<std::size_t>(n));
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fwd_ = fftw_plan_dft_1d(n, a, b, FFTW_FORWARD, flags);
    bwd_ = fftw_plan_dft_1d(n, a, b, FFTW_BACKWARD, flags);
    fftw_free(a);
    fftw_free(b);
  }
  fft_plan(const fft_plan&) = delete;
  fft_plan& operator=(const fft_plan&) = delete;
  ~fft_plan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  int size() const { return n_; }

  void forward(const cplx* in, cplx* out) const { exec(fwd_, in, out); }
  void backward(const cplx* in, cplx* out) const { exec(bwd_, in, out); }

 private:
  static std::mutex& planner_mutex() {
    // leaked on purpose: cached plans are destroyed during static teardown
    static auto* m = new std::mutex;
    return *m;
  }
  static void exec(fftw_plan p, const cplx* in, cplx* out) {
    // in and out must not alias: the plans are out-of-place
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }

  int n_;
  fftw_plan fwd_{};
  fftw_plan bwd_{};
};

/// Shared plan per length.
inline std::shared_ptr<const fft_plan> plan_for(int n) {
  static std::mutex m;
  static std::map<int, std::shared_ptr<const fft_plan>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto p = std::make_shared<const fft_plan>(n);
  cache.emplace(n, p);
  return p;
}

}  // namespace phc
