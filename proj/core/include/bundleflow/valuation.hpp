#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bundleflow/common.hpp"
#include "bundleflow/rng.hpp"

namespace bundleflow {

/// Auction-wide constants: item count m and the value cap v_max.
struct AuctionConfig {
    std::size_t m = 0;
    double v_max = 1.0;

    void validate() const {
        if (m < 1) throw ConfigError("auction.m must be >= 1");
        if (!(v_max > 0.0)) throw ConfigError("auction.v_max must be > 0");
    }
};

/// Subset of the m items as a 0/1 vector, stored packed for fast subset tests.
class Bundle {
public:
    Bundle() = default;
    explicit Bundle(std::size_t m) : m_(m), words_((m + 63) / 64, 0) {}

    static Bundle from_bits(const std::vector<int>& bits) {
        Bundle b(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] != 0 && bits[i] != 1) throw DomainError("bundle entries must be 0/1");
            if (bits[i]) b.set(i);
        }
        return b;
    }

    static Bundle grand(std::size_t m) {
        Bundle b(m);
        for (std::size_t i = 0; i < m; ++i) b.set(i);
        return b;
    }

    std::size_t size() const { return m_; }

    bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    void set(std::size_t i) { words_[i >> 6] |= (std::uint64_t{1} << (i & 63)); }
    void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }

    std::size_t count() const {
        std::size_t c = 0;
        for (auto w : words_) c += static_cast<std::size_t>(__builtin_popcountll(w));
        return c;
    }

    bool empty() const {
        for (auto w : words_) {
            if (w) return false;
        }
        return true;
    }

    /// True iff this is a subset of other (same m required).
    bool subset_of(const Bundle& other) const {
        for (std::size_t k = 0; k < words_.size(); ++k) {
            if (words_[k] & ~other.words_[k]) return false;
        }
        return true;
    }

    std::vector<int> bits() const {
        std::vector<int> out(m_);
        for (std::size_t i = 0; i < m_; ++i) out[i] = test(i) ? 1 : 0;
        return out;
    }

    std::string to_string() const {
        std::string s(m_, '0');
        for (std::size_t i = 0; i < m_; ++i) {
            if (test(i)) s[i] = '1';
        }
        return s;
    }

    friend bool operator==(const Bundle& a, const Bundle& b) {
        return a.m_ == b.m_ && a.words_ == b.words_;
    }
    friend bool operator<(const Bundle& a, const Bundle& b) {
        if (a.m_ != b.m_) return a.m_ < b.m_;
        return a.words_ < b.words_;
    }

private:
    std::size_t m_ = 0;
    std::vector<std::uint64_t> words_;
};

/// One XOR bid: a bundle and its price.
struct XorAtom {
    Bundle bundle;
    double price = 0.0;
};

/// XOR valuation: v(S) = max price over atoms whose bundle fits inside S.
class XorValuation {
public:
    XorValuation() = default;
    XorValuation(std::size_t m, std::vector<XorAtom> atoms);

    std::size_t item_count() const { return m_; }
    const std::vector<XorAtom>& atoms() const { return atoms_; }
    std::size_t atom_count() const { return atoms_.size(); }

    friend bool operator==(const XorValuation& a, const XorValuation& b) {
        if (a.m_ != b.m_ || a.atoms_.size() != b.atoms_.size()) return false;
        for (std::size_t i = 0; i < a.atoms_.size(); ++i) {
            if (!(a.atoms_[i].bundle == b.atoms_[i].bundle) ||
                a.atoms_[i].price != b.atoms_[i].price)
                return false;
        }
        return true;
    }

private:
    std::size_t m_ = 0;
    std::vector<XorAtom> atoms_;
};

enum class SplitTag { Full, Train, Test };

struct ValuationDataset {
    AuctionConfig config;
    std::vector<XorValuation> samples;
    SplitTag split = SplitTag::Full;
};

enum class PriceDist { Uniform, Normal };

PriceDist parse_price_dist(const std::string& name);
std::string to_string(PriceDist d);

/// Knobs for the CATS-like synthetic generator.
struct SyntheticConfig {
    std::size_t count = 1;
    PriceDist dist = PriceDist::Uniform;
    std::size_t max_atoms = 5;
    double item_prob = 0.3;  // per-item bundle inclusion probability
};

/// v(S): max atom price over atoms contained in S; 0 if none qualifies.
double evaluate(const XorValuation& v, const Bundle& s);

/// Sum of p_j * v(S_j) over an explicit finite support.
double expected_value(const XorValuation& v,
                      const std::vector<std::pair<Bundle, double>>& support);

ValuationDataset generate_synthetic(const AuctionConfig& config, const SyntheticConfig& gen,
                                    std::uint64_t seed);

/// Parse one CATS output file; returns the valuation identified by the
/// lowest-numbered dummy good (zero samples if the bid section is empty).
ValuationDataset load_cats(const std::string& path);

/// All CATS files in a directory (sorted by name), one valuation per file.
ValuationDataset load_cats_dir(const std::string& dir);

std::pair<ValuationDataset, ValuationDataset> split(const ValuationDataset& ds,
                                                    double train_fraction, std::uint64_t seed);

/// Canonical JSON-lines dataset format: {"m":..,"atoms":[{"bundle":[..],"price":..}]}.
void save_jsonl(const ValuationDataset& ds, const std::string& path);
ValuationDataset load_jsonl(const std::string& path);

}  // namespace bundleflow
