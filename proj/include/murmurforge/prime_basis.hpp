#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace murmurforge {

/// Number of primes below 1000; the fixed width of every coefficient row.
inline constexpr std::size_t kPrimeCount = 168;

constexpr bool is_prime(std::int64_t n) {
    if (n < 2) return false;
    if (n < 4) return true;
    if (n % 2 == 0) return false;
    for (std::int64_t i = 3; i * i <= n; i += 2)
        if (n % i == 0) return false;
    return true;
}

/// The index set of coefficient vectors: the 168 primes 2..997 in
/// increasing order. Constructing a basis from an explicit list validates
/// the same shape, so a corrupted basis cannot enter a Dataset.
class PrimeBasis {
public:
    PrimeBasis() {
        primes_.reserve(kPrimeCount);
        for (int p = 2; p < 1000; ++p)
            if (is_prime(p)) primes_.push_back(p);
    }

    explicit PrimeBasis(std::vector<int> primes) : primes_(std::move(primes)) {
        if (primes_.size() != kPrimeCount)
            throw std::invalid_argument("PrimeBasis: expected 168 primes, got " +
                                        std::to_string(primes_.size()));
        if (primes_.front() != 2 || primes_.back() != 997)
            throw std::invalid_argument("PrimeBasis: must start at 2 and end at 997");
        for (std::size_t i = 0; i < primes_.size(); ++i) {
            if (i > 0 && primes_[i] <= primes_[i - 1])
                throw std::invalid_argument("PrimeBasis: not strictly increasing at index " +
                                            std::to_string(i));
            if (!is_prime(primes_[i]))
                throw std::invalid_argument("PrimeBasis: composite entry " +
                                            std::to_string(primes_[i]));
        }
    }

    std::span<const int> primes() const { return primes_; }
    std::size_t size() const { return primes_.size(); }
    int operator[](std::size_t i) const { return primes_[i]; }

    /// Position of p in the basis, if p is one of the 168 primes.
    std::optional<std::size_t> index_of(int p) const {
        std::size_t lo = 0, hi = primes_.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (primes_[mid] < p) lo = mid + 1; else hi = mid;
        }
        if (lo < primes_.size() && primes_[lo] == p) return lo;
        return std::nullopt;
    }

    bool operator==(const PrimeBasis& other) const { return primes_ == other.primes_; }

private:
    std::vector<int> primes_;
};

} // namespace murmurforge
