#include "contextgpt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "contextgpt/error.hpp"

namespace contextgpt::kernels {

namespace {

double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double cosine_unchecked(std::span<const float> a, double norm_a, std::span<const float> b) {
  double c = dot(a, b) / (norm_a * norm(b));
  return std::clamp(c, -1.0, 1.0);
}

double checked_norm(std::span<const float> v, const char* what) {
  double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError(std::string("cosine: ") + what + " is a zero vector");
  return n;
}

double validate(std::span<const float> query, std::span<const std::span<const float>> rows,
                std::span<double> out) {
  if (out.size() != rows.size()) throw ValidationError("cosine_scores: output size mismatch");
  double qn = checked_norm(query, "query");
  for (const auto& row : rows) {
    if (row.size() != query.size())
      throw ValidationError("cosine: length mismatch (" + std::to_string(row.size()) + " vs " +
                            std::to_string(query.size()) + ")");
    checked_norm(row, "candidate");
  }
  return qn;
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ValidationError("cosine: length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  double na = checked_norm(a, "first argument");
  checked_norm(b, "second argument");
  return cosine_unchecked(a, na, b);
}

void cosine_scores_serial(std::span<const float> query, std::span<const std::span<const float>> rows,
                          std::span<double> out) {
  double qn = validate(query, rows, out);
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = cosine_unchecked(query, qn, rows[i]);
}

void cosine_scores(std::span<const float> query, std::span<const std::span<const float>> rows,
                   std::span<double> out) {
  double qn = validate(query, rows, out);
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = cosine_unchecked(query, qn, rows[i]);
}

std::vector<std::size_t> rank_above(std::span<const double> scores, double threshold) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > threshold) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace contextgpt::kernels
