#pragma once

// Independent reference implementations used as test oracles. Everything is
// written from the textbook formulas in double precision with plain loops and
// shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Pearson correlation of two series, direct formula.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Full correlation matrix of the rows of `h` (n rows, t columns).
inline Matrix correlation(const Matrix& h) {
  const std::size_t n = h.size();
  Matrix a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = pearson(h[i], h[j]);
  }
  return a;
}

/// exp(mean negative log-likelihood) of tokens[1..] from row-major logits
/// (t rows of `vocab` values) with an explicit log-sum-exp.
inline double perplexity(const std::vector<double>& logits, std::size_t vocab,
                         const std::vector<std::uint32_t>& tokens) {
  double nll = 0.0;
  for (std::size_t p = 0; p + 1 < tokens.size(); ++p) {
    const double* row = logits.data() + p * vocab;
    double mx = row[0];
    for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, row[v]);
    double sum = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) sum += std::exp(row[v] - mx);
    nll += std::log(sum) + mx - row[tokens[p + 1]];
  }
  return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t j = 0; j < b.front().size(); ++j) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

/// Graph encoder: Phi^l = sigma(A Phi^{l-1} Theta^l), then mean and max
/// pooling over nodes concatenated.
inline std::vector<double> gcn(const Matrix& a, const Matrix& phi0, const std::vector<Matrix>& theta,
                               bool relu) {
  Matrix h = phi0;
  for (const auto& w : theta) {
    h = matmul(matmul(a, h), w);
    if (relu) {
      for (auto& row : h) {
        for (auto& v : row) v = std::max(v, 0.0);
      }
    }
  }
  const std::size_t d = h.front().size();
  std::vector<double> z(2 * d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double mx = h[0][c];
    for (const auto& row : h) {
      z[c] += row[c] / static_cast<double>(h.size());
      mx = std::max(mx, row[c]);
    }
    z[d + c] = mx;
  }
  return z;
}

/// W2^T ReLU(W1^T z).
inline double head(const std::vector<double>& z, const Matrix& w1, const Matrix& w2) {
  double p = 0.0;
  for (std::size_t j = 0; j < w1.front().size(); ++j) {
    double h = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) h += z[i] * w1[i][j];
    p += std::max(h, 0.0) * w2[j][0];
  }
  return p;
}

/// ROC area by counting every positive/negative pair; ties count one half.
inline double auc_pairs(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Flattened-grid AUC and mean per-row/per-column AUC against the identity.
inline std::pair<double, double> auc_gauc(const Matrix& s) {
  const std::size_t n = s.size();
  std::vector<double> flat;
  std::vector<bool> target;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      flat.push_back(s[i][j]);
      target.push_back(i == j);
    }
  }
  double g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(s[i]);
    std::vector<double> col;
    std::vector<bool> t(n, false);
    t[i] = true;
    for (std::size_t j = 0; j < n; ++j) col.push_back(s[j][i]);
    g += auc_pairs(row, t) + auc_pairs(col, t);
  }
  return {auc_pairs(flat, target), g / static_cast<double>(2 * n)};
}

/// Rank-free Spearman reference: Pearson of average ranks computed by
/// counting smaller and equal elements.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        if (w < v[i]) less += 1;
        else if (w == v[i]) equal += 1;
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  return pearson(ranks(x), ranks(y));
}

}  // namespace oracle
