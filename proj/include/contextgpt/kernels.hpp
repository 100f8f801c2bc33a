#pragma once

// Data-parallel similarity kernels. Each kernel has a serial reference with
// identical per-element arithmetic; the OpenMP version must match it bit for
// bit and is checked against it in the tests and the benchmark.

#include <span>
#include <vector>

namespace contextgpt::kernels {

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws ValidationError on a
/// length mismatch or an all-zero input.
double cosine(std::span<const float> a, std::span<const float> b);

/// out[i] = cosine(query, rows[i]). Inputs are validated before any scoring.
void cosine_scores_serial(std::span<const float> query, std::span<const std::span<const float>> rows,
                          std::span<double> out);
void cosine_scores(std::span<const float> query, std::span<const std::span<const float>> rows,
                   std::span<double> out);

/// Indices of scores strictly greater than `threshold`, by descending score,
/// ties in index order.
std::vector<std::size_t> rank_above(std::span<const double> scores, double threshold);

}  // namespace contextgpt::kernels
