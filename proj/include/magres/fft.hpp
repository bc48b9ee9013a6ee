// fft.hpp - windowed FFT and spectral peak extraction for oscillation spectra
#pragma once

#include <algorithm>
#include <complex>
#include <cmath>
#include <vector>

#include "magres/common.hpp"

namespace magres {

// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * pi / (double)len;
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

struct SpectralPeak {
    double frequency = 0.0;  // cycles per unit of the sweep variable
    double amplitude = 0.0;  // amplitude of the underlying cosine tone
    int bin = 0;
};

struct PeakSpectrum {
    std::vector<SpectralPeak> peaks;   // sorted by frequency
    double resolution = 0.0;           // 1 / (grid span)
    double noise_floor = 0.0;
    std::vector<double> freq;          // full one-sided frequency axis
    std::vector<double> amp;           // window-corrected amplitude per bin
};

// cos^4 window: first three derivatives vanish at the edges, so far
// sidelobes fall ~ k^-5. Needed because dHvA tones in one series can span
// eight orders of magnitude in amplitude.
inline double cos4_window(size_t i, size_t n) {
    double s = std::sin(pi * (double)i / (double)(n - 1));
    double s2 = s * s;
    return s2 * s2;
}

// Windowed FFT of uniformly sampled real data; returns peaks above
// max(amplitude) * rel_threshold (relative floor) and absolute floor.
inline PeakSpectrum extract_peaks(const std::vector<double>& x0, const std::vector<double>& y,
                                  double rel_threshold = 1e-3, double abs_threshold = 0.0) {
    PeakSpectrum out;
    size_t n = y.size();
    if (n < 8) throw NumericalError("extract_peaks: need at least 8 samples");
    double dx = x0[1] - x0[0];
    for (size_t i = 1; i + 1 < n; ++i) {
        double d = x0[i + 1] - x0[i];
        if (std::abs(d - dx) > 1e-9 * std::max(1.0, std::abs(dx)))
            throw NumericalError("extract_peaks: grid is not uniform");
    }
    out.resolution = 1.0 / (dx * (double)(n - 1));

    double wsum = 0.0;
    size_t nfft = 1;
    while (nfft < 4 * n) nfft <<= 1;  // zero-pad for peak interpolation
    std::vector<std::complex<double>> buf(nfft, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double w = cos4_window(i, n);
        wsum += w;
        buf[i] = y[i] * w;
    }
    fft_pow2(buf);

    size_t half = nfft / 2;
    out.freq.resize(half);
    out.amp.resize(half);
    double df = 1.0 / (dx * (double)nfft);
    double peak_max = 0.0;
    for (size_t k = 0; k < half; ++k) {
        out.freq[k] = df * (double)k;
        out.amp[k] = 2.0 * std::abs(buf[k]) / wsum;
        peak_max = std::max(peak_max, out.amp[k]);
    }
    double floor_level = std::max(abs_threshold, peak_max * rel_threshold);
    out.noise_floor = floor_level;

    // local maxima above the floor, quadratically refined on log amplitude
    size_t kmin = (size_t)std::ceil(2.0 * out.resolution / df);  // skip DC lobe
    for (size_t k = std::max<size_t>(kmin, 1); k + 1 < half; ++k) {
        if (out.amp[k] <= floor_level) continue;
        if (!(out.amp[k] > out.amp[k - 1] && out.amp[k] >= out.amp[k + 1])) continue;
        double la = std::log(out.amp[k - 1]), lb = std::log(out.amp[k]), lc = std::log(out.amp[k + 1]);
        double denom = la - 2.0 * lb + lc;
        double delta = (std::abs(denom) > 1e-300) ? 0.5 * (la - lc) / denom : 0.0;
        delta = std::clamp(delta, -0.5, 0.5);
        SpectralPeak p;
        p.bin = (int)k;
        p.frequency = df * ((double)k + delta);
        p.amplitude = std::exp(lb - 0.25 * (la - lc) * delta);
        // merge shoulders of one windowed tone: keep the larger
        if (!out.peaks.empty() && p.frequency - out.peaks.back().frequency < 3.0 * out.resolution) {
            if (p.amplitude > out.peaks.back().amplitude) out.peaks.back() = p;
        } else {
            out.peaks.push_back(p);
        }
    }
    return out;
}

}  // namespace magres
