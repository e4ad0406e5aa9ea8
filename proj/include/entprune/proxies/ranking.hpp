#pragma once

// Rank-vote aggregation of candidate subnetworks:
//   total = R(kappa) + R(zico) + gamma * R(params)
// where R is the standard competition rank (1 = smallest metric; ties share
// the better rank and the next rank skips). Candidates flagged degenerate on a
// metric rank behind every unflagged candidate on that metric.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <vector>

#include "entprune/flow/backbone.hpp"

namespace entprune {

inline constexpr double kDefaultGamma = 0.5;

struct RawCandidate {
    SubnetMask mask;
    double kappa = 0.0;
    double zico = 0.0;
    std::size_t params = 0;
    bool kappa_degenerate = false;
    bool zico_degenerate = false;
};

struct ScoredCandidate {
    RawCandidate raw;
    std::size_t rank_kappa = 0;
    std::size_t rank_zico = 0;
    std::size_t rank_params = 0;
    double total = 0.0;
};

struct ProxyScores {
    std::vector<ScoredCandidate> candidates; // sorted by total; front() is selected
    double gamma = kDefaultGamma;

    const ScoredCandidate& winner() const { return candidates.front(); }
};

// Competition ranks of `values`; `flagged` entries sort after all unflagged ones.
inline std::vector<std::size_t> competition_ranks(const std::vector<double>& values,
                                                  const std::vector<bool>& flagged = {}) {
    const std::size_t n = values.size();
    auto key_less = [&](std::size_t a, std::size_t b) {
        const bool fa = !flagged.empty() && flagged[a];
        const bool fb = !flagged.empty() && flagged[b];
        if (fa != fb) return !fa;
        return values[a] < values[b];
    };
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t better = 0;
        for (std::size_t j = 0; j < n; ++j) better += key_less(j, i);
        r[i] = better + 1;
    }
    return r;
}

inline ProxyScores rank_candidates(const std::vector<RawCandidate>& raw, double gamma = kDefaultGamma) {
    detail::require(!raw.empty(), "rank_candidates: no candidates");
    detail::require(gamma >= 0.0, "rank_candidates: gamma must be >= 0");
    std::vector<double> kappa, zico, params;
    std::vector<bool> kflag, zflag;
    for (const auto& c : raw) {
        kappa.push_back(c.kappa);
        zico.push_back(c.zico);
        params.push_back(static_cast<double>(c.params));
        kflag.push_back(c.kappa_degenerate);
        zflag.push_back(c.zico_degenerate);
    }
    const auto rk = competition_ranks(kappa, kflag);
    const auto rz = competition_ranks(zico, zflag);
    const auto rp = competition_ranks(params);
    ProxyScores out;
    out.gamma = gamma;
    for (std::size_t i = 0; i < raw.size(); ++i)
        out.candidates.push_back({raw[i], rk[i], rz[i], rp[i],
                                  static_cast<double>(rk[i]) + static_cast<double>(rz[i]) +
                                      gamma * static_cast<double>(rp[i])});
    std::stable_sort(out.candidates.begin(), out.candidates.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.total != b.total) return a.total < b.total;
        if (a.raw.params != b.raw.params) return a.raw.params < b.raw.params;
        const std::size_t da = a.raw.mask.size() - a.raw.mask.n_active();
        const std::size_t db = b.raw.mask.size() - b.raw.mask.n_active();
        if (da != db) return da < db;
        return a.raw.mask.bits() < b.raw.mask.bits();
    });
    return out;
}

// CSV columns: mask_bits, kappa, zico, params, rank_kappa, rank_zico, rank_params, total, selected.
inline void write_proxy_csv(std::ostream& os, const ProxyScores& s) {
    os << "mask_bits,kappa,zico,params,rank_kappa,rank_zico,rank_params,total,selected\n";
    os.precision(17);
    for (std::size_t i = 0; i < s.candidates.size(); ++i) {
        const auto& c = s.candidates[i];
        os << c.raw.mask.bits() << ',' << c.raw.kappa << ',' << c.raw.zico << ',' << c.raw.params << ',' << c.rank_kappa
           << ',' << c.rank_zico << ',' << c.rank_params << ',' << c.total << ',' << (i == 0 ? 1 : 0) << '\n';
    }
}

} // namespace entprune
