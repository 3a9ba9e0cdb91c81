#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace cmcr::baselines {

// Lexicographic ranking of M-subsets of {0..K-1}. rank({0,1,..,M-1}) = 0 and
// rank/unrank are mutual inverses over [0, C(K,M)).
class SubsetCodec {
 public:
  SubsetCodec(int num_channels, int subset_size);

  int num_channels() const { return k_; }
  int subset_size() const { return m_; }
  std::uint64_t count() const { return count_; }  // C(K, M)

  std::uint64_t rank(std::span<const int> subset) const;
  std::vector<int> unrank(std::uint64_t index) const;

 private:
  std::uint64_t choose(int n, int r) const {
    if (r < 0 || r > n) return 0;
    return binom_[static_cast<std::size_t>(n) * (m_ + 1) + r];
  }

  int k_ = 0, m_ = 0;
  std::uint64_t count_ = 0;
  std::vector<std::uint64_t> binom_;  // (K+1) x (M+1) Pascal table
};

inline SubsetCodec::SubsetCodec(int num_channels, int subset_size)
    : k_(num_channels), m_(subset_size) {
  if (k_ < 1 || m_ < 1 || m_ > k_)
    throw std::domain_error("subset codec: need 1 <= M <= K");
  binom_.assign(static_cast<std::size_t>(k_ + 1) * (m_ + 1), 0);
  for (int n = 0; n <= k_; ++n) {
    binom_[static_cast<std::size_t>(n) * (m_ + 1)] = 1;
    for (int r = 1; r <= std::min(n, m_); ++r) {
      const std::uint64_t without = binom_[static_cast<std::size_t>(n - 1) * (m_ + 1) + r];
      const std::uint64_t with = binom_[static_cast<std::size_t>(n - 1) * (m_ + 1) + r - 1];
      binom_[static_cast<std::size_t>(n) * (m_ + 1) + r] = without + with;
    }
  }
  count_ = choose(k_, m_);
}

inline std::uint64_t SubsetCodec::rank(std::span<const int> subset) const {
  if (static_cast<int>(subset.size()) != m_)
    throw std::domain_error("subset codec: wrong subset size");
  std::uint64_t r = 0;
  int prev = -1;
  for (int i = 0; i < m_; ++i) {
    const int c = subset[i];
    if (c <= prev || c >= k_)
      throw std::domain_error("subset codec: subset must be strictly increasing in [0,K)");
    // Count the subsets that start with a smaller element at this position.
    for (int skipped = prev + 1; skipped < c; ++skipped)
      r += choose(k_ - 1 - skipped, m_ - 1 - i);
    prev = c;
  }
  return r;
}

inline std::vector<int> SubsetCodec::unrank(std::uint64_t index) const {
  if (index >= count_) throw std::domain_error("subset codec: index out of range");
  std::vector<int> subset(m_);
  int next = 0;
  for (int i = 0; i < m_; ++i) {
    for (int c = next;; ++c) {
      const std::uint64_t block = choose(k_ - 1 - c, m_ - 1 - i);
      if (index < block) {
        subset[i] = c;
        next = c + 1;
        break;
      }
      index -= block;
    }
  }
  return subset;
}

}  // namespace cmcr::baselines
