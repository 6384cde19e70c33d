// Acceptance gate: one self-contained check per shipping criterion. Each
// test prints a single PASS/FAIL line so the suite output doubles as the
// release checklist.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "streamkv/harness/harness.hpp"

using namespace streamkv;

namespace {

constexpr double kNullMean = 0.128273;  // E[Cons], W = 5, i.i.d. uniform
constexpr double kNullSe = 1.26e-4;     // fixture standard error (2M samples)

void report(int idx, const char* name, bool ok) {
    std::printf("criterion %2d %-38s %s\n", idx, name, ok ? "PASS" : "FAIL");
    std::fflush(stdout);
    REQUIRE(ok);
}

double elapsed_sec(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

Vec random_permutation_ranks(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return clces::normalize_ranks(perm);
}

}  // namespace

TEST_CASE("acceptance: budget invariant") {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(11);
    std::size_t violations = 0;
    for (int run = 0; run < 200; ++run) {
        core::PipelineConfig cfg;
        cfg.num_layers = 1 + static_cast<int>(rng() % 4);
        cfg.tokens_per_frame = 8 + static_cast<int>(rng() % 25);
        const int factor = 1 + static_cast<int>(rng() % 8);  // B(l) in [M, 8M]
        cfg.budget_total = cfg.num_layers * cfg.tokens_per_frame * factor;
        cfg.rng_seed = rng();
        const int frames = 5 + static_cast<int>(rng() % 46);
        const auto budgets = core::per_layer_budgets(cfg);
        const auto rep = harness::run_toy(cfg, frames);
        for (const auto& f : rep.per_frame)
            for (std::size_t l = 0; l < f.layers.size(); ++l)
                if (f.layers[l].cache_size > budgets[l]) ++violations;
    }
    const double sec = elapsed_sec(t0);
    report(1, "budget invariant", violations == 0 && sec < 120.0);
}

TEST_CASE("acceptance: pure-eviction baseline reduction") {
    struct RefEntry {
        core::TokenId id;
        Vec key, value;
        double score;
        bool anchored;
    };
    bool ok = true;
    for (int run = 0; run < 20 && ok; ++run) {
        core::PipelineConfig cfg;
        cfg.num_layers = 2;
        cfg.tokens_per_frame = 16;
        cfg.budget_total = 2 * 48;
        cfg.consistency_weight = 0.0;
        cfg.merge_ratio = 0.0;
        cfg.smoothing_alpha = 0.0;
        cfg.hybrid_beta = 1.0;
        cfg.dap_eta = 0.0;
        cfg.rng_seed = 5000 + run;
        const int frames = 10;
        const int L = cfg.num_layers, M = cfg.tokens_per_frame;
        const auto budgets = core::per_layer_budgets(cfg);

        // Independent pure-eviction reference: keep the top-scoring
        // unanchored tokens up to the budget headroom, drop the rest.
        const auto stream = harness::generate_stream(cfg, frames);
        std::vector<std::vector<RefEntry>> ref(L);
        for (int t = 0; t < frames; ++t)
            for (int l = 0; l < L; ++l) {
                const auto& acts = stream[t * L + l];
                for (int i = 0; i < M; ++i)
                    ref[l].push_back(
                        {static_cast<core::TokenId>((t * L + l) * M + i),
                         acts.keys.row(i), acts.values.row(i),
                         acts.raw_scores[i], t == 0});
                std::vector<std::size_t> evictable;
                std::size_t n_anchored = 0;
                for (std::size_t p = 0; p < ref[l].size(); ++p) {
                    if (ref[l][p].anchored)
                        ++n_anchored;
                    else
                        evictable.push_back(p);
                }
                const std::size_t n_keep =
                    std::min(evictable.size(), budgets[l] - n_anchored);
                std::stable_sort(evictable.begin(), evictable.end(),
                                 [&](std::size_t a, std::size_t b) {
                                     return ref[l][a].score > ref[l][b].score;
                                 });
                std::vector<char> drop(ref[l].size(), 0);
                for (std::size_t r = n_keep; r < evictable.size(); ++r)
                    drop[evictable[r]] = 1;
                std::vector<RefEntry> kept;
                for (std::size_t p = 0; p < ref[l].size(); ++p)
                    if (!drop[p]) kept.push_back(std::move(ref[l][p]));
                ref[l] = std::move(kept);
            }

        pipeline::StreamState state;
        harness::run_toy(cfg, frames, harness::StreamRegime::Plain, &state);
        for (int l = 0; l < L && ok; ++l) {
            if (state.caches[l].entries.size() != ref[l].size()) {
                ok = false;
                break;
            }
            for (std::size_t p = 0; p < ref[l].size(); ++p) {
                const auto& e = state.caches[l].entries[p];
                const auto& r = ref[l][p];
                if (e.token_id != r.id || e.key != r.key ||
                    e.value != r.value || e.absorbed_count != 0) {
                    ok = false;
                    break;
                }
            }
        }
    }
    report(2, "pure-eviction baseline reduction", ok);
}

TEST_CASE("acceptance: consistency bounds and null calibration") {
    std::mt19937_64 rng(23);
    bool bounds_ok = true;

    // 1e6 random windows of 4 tokens each, all Cons in [0, 1].
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> wdist(2, 8);
    std::size_t windows_checked = 0;
    while (windows_checked < 1'000'000) {
        clces::RankWindow win(static_cast<std::size_t>(wdist(rng)));
        const std::size_t fill = 1 + rng() % win.capacity();
        for (std::size_t c = 0; c < fill; ++c) {
            Vec col(4);
            for (auto& v : col) v = u(rng);
            win.push_layer(std::move(col));
        }
        const auto rep = win.consistency();
        for (double v : rep.consistency)
            if (!(v >= 0.0 && v <= 1.0)) bounds_ok = false;
        ++windows_checked;
    }

    // Zero-variance columns must yield Cons = 1 exactly.
    bool exact_ok = true;
    clces::RankWindow zwin(5);
    const Vec fixed = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int c = 0; c < 5; ++c) zwin.push_layer(fixed);
    for (double v : zwin.consistency().consistency)
        if (v != 1.0) exact_ok = false;

    // Null calibration: W = 5 independent rank columns over 1e4 tokens.
    const std::size_t n = 10'000;
    clces::RankWindow null_win(5);
    for (int c = 0; c < 5; ++c)
        null_win.push_layer(random_permutation_ranks(n, rng));
    const auto cons = null_win.consistency().consistency;
    double mean = 0.0, var = 0.0;
    for (double v : cons) mean += v;
    mean /= static_cast<double>(n);
    for (double v : cons) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    const double se =
        std::sqrt(var / static_cast<double>(n) + kNullSe * kNullSe);
    const bool null_ok = std::abs(mean - kNullMean) <= 3.0 * se;

    report(3, "consistency bounds and null calibration",
           bounds_ok && exact_ok && null_ok);
}

TEST_CASE("acceptance: rank oracle equivalence") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const std::size_t n = 1 + rng() % 512;
        Vec scores(n);
        if (trial % 2 == 0)
            for (auto& s : scores) s = u(rng);
        else  // duplicate-heavy: values from a 3-element alphabet
            for (auto& s : scores) s = static_cast<double>(rng() % 3);
        if (clces::compute_ranks(scores) != oracles::oracle_rank(scores))
            ok = false;
    }
    report(4, "rank oracle equivalence", ok);
}

TEST_CASE("acceptance: nearest-neighbor oracle equivalence") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.0, 1.0);
    bool ok = true;
    for (int trial = 0; trial < 500 && ok; ++trial) {
        const std::size_t n_merge = 1 + rng() % 64;
        const std::size_t n_target = 1 + rng() % 128;
        std::vector<Vec> merge_keys(n_merge), targets(n_target);
        for (auto& k : merge_keys) {
            k.assign(16, 0.0);
            for (auto& v : k) v = g(rng);
        }
        for (auto& k : targets) {
            k.assign(16, 0.0);
            for (auto& v : k) v = g(rng);
        }
        if (trial % 3 == 0) {
            merge_keys[rng() % n_merge].assign(16, 0.0);  // zero-norm query
            targets[rng() % n_target].assign(16, 0.0);    // zero-norm target
        }
        if (trial % 4 == 0 && n_target > 1)
            targets[n_target - 1] = targets[0];  // duplicate: tie to index 0
        if (hcc::nn_assign(merge_keys, targets) !=
            oracles::oracle_nn(merge_keys, targets))
            ok = false;
    }
    report(5, "nearest-neighbor oracle equivalence", ok);
}

TEST_CASE("acceptance: merge algebra") {
    std::mt19937_64 rng(53);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> w(0.1, 5.0);
    bool ok = true;

    auto sequential = [](Vec target, double s_target,
                         const std::vector<Vec>& cands, const Vec& s_cands,
                         const std::vector<std::size_t>& order) {
        for (std::size_t j : order) {
            const double denom = s_target + s_cands[j];
            for (std::size_t d = 0; d < target.size(); ++d)
                target[d] = (s_target * target[d] + s_cands[j] * cands[j][d]) /
                            denom;
            s_target = denom;
        }
        return std::make_pair(target, s_target);
    };

    for (std::size_t k = 1; k <= 8 && ok; ++k) {
        for (int trial = 0; trial < 25 && ok; ++trial) {
            Vec target(8);
            for (auto& v : target) v = g(rng);
            const double s_target = w(rng);
            std::vector<Vec> cands(k, Vec(8));
            Vec s_cands(k);
            for (std::size_t j = 0; j < k; ++j) {
                for (auto& v : cands[j]) v = g(rng);
                s_cands[j] = w(rng);
            }
            std::vector<Vec> all = {target};
            all.insert(all.end(), cands.begin(), cands.end());
            Vec weights = {s_target};
            weights.insert(weights.end(), s_cands.begin(), s_cands.end());
            const Vec batch = oracles::oracle_batch_merge(all, weights);
            const double mass =
                std::accumulate(weights.begin(), weights.end(), 0.0);

            std::vector<std::vector<std::size_t>> orders;
            std::vector<std::size_t> order(k);
            std::iota(order.begin(), order.end(), 0);
            if (k <= 5) {
                do orders.push_back(order);
                while (std::next_permutation(order.begin(), order.end()));
            } else {
                for (int s = 0; s < 30; ++s) {
                    std::shuffle(order.begin(), order.end(), rng);
                    orders.push_back(order);
                }
            }
            for (const auto& ord : orders) {
                const auto [fused, s_final] =
                    sequential(target, s_target, cands, s_cands, ord);
                if (std::abs(s_final - mass) > 1e-9 * mass) ok = false;
                for (std::size_t d = 0; d < fused.size(); ++d)
                    if (std::abs(fused[d] - batch[d]) >
                        1e-9 * std::max(1.0, std::abs(batch[d])))
                        ok = false;
            }
        }
    }
    report(6, "merge algebra", ok);
}

TEST_CASE("acceptance: triage partition and dominance") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> rm(0.0, 1.0);
    std::size_t violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 200;
        Vec scores(n);
        for (auto& s : scores)
            s = trial % 3 == 0 ? static_cast<double>(rng() % 4) : u(rng);
        const std::size_t protected_count = rng() % 11;
        const std::size_t budget = protected_count + rng() % (n + 10);
        const double merge_ratio = rm(rng);
        const auto tri = hcc::triage(scores, protected_count, budget,
                                     merge_ratio);

        std::vector<char> seen(n, 0);
        for (std::size_t i : tri.retain) seen[i] += 1;
        for (std::size_t i : tri.merge) seen[i] += 1;
        for (std::size_t i : tri.evict) seen[i] += 1;
        for (char c : seen)
            if (c != 1) ++violations;

        double min_retain = 1e300, min_merge = 1e300;
        double max_merge = -1e300, max_evict = -1e300;
        for (std::size_t i : tri.retain)
            min_retain = std::min(min_retain, scores[i]);
        for (std::size_t i : tri.merge) {
            min_merge = std::min(min_merge, scores[i]);
            max_merge = std::max(max_merge, scores[i]);
        }
        for (std::size_t i : tri.evict)
            max_evict = std::max(max_evict, scores[i]);
        if (!tri.retain.empty() && !tri.merge.empty() &&
            min_retain < max_merge)
            ++violations;
        if (!tri.merge.empty() && !tri.evict.empty() && min_merge < max_evict)
            ++violations;
        if (!tri.retain.empty() && tri.merge.empty() && !tri.evict.empty() &&
            min_retain < max_evict)
            ++violations;

        const std::size_t headroom = budget - protected_count;
        const std::size_t n_retain = std::min(n, headroom);
        const std::size_t n_rest = n - n_retain;
        if (tri.merge.size() !=
            static_cast<std::size_t>(
                std::ceil(merge_ratio * static_cast<double>(n_rest))))
            ++violations;
    }
    report(7, "triage partition and dominance", violations == 0);
}

TEST_CASE("acceptance: scale invariance") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    const double scales[] = {1e-3, 7.0, 1e3};
    std::size_t violations = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 100;
        Vec scores(n);
        for (auto& s : scores) s = u(rng);
        const std::size_t budget = rng() % (n + 5);
        const double merge_ratio = 0.05 * static_cast<double>(rng() % 20);
        const auto base = hcc::triage(scores, 0, budget, merge_ratio);
        for (double c : scales) {
            Vec scaled = scores;
            for (auto& s : scaled) s *= c;
            const auto got = hcc::triage(scaled, 0, budget, merge_ratio);
            if (got.retain != base.retain || got.merge != base.merge ||
                got.evict != base.evict)
                ++violations;
        }

        std::vector<Vec> merge_keys(1 + rng() % 16, Vec(16));
        std::vector<Vec> targets(1 + rng() % 16, Vec(16));
        for (auto& k : merge_keys)
            for (auto& v : k) v = g(rng);
        for (auto& k : targets)
            for (auto& v : k) v = g(rng);
        const auto base_nn = hcc::nn_assign(merge_keys, targets);
        for (double c : scales) {
            auto mk = merge_keys;
            auto tg = targets;
            for (auto& v : mk[rng() % mk.size()]) v *= c;
            for (auto& v : tg[rng() % tg.size()]) v *= c;
            if (hcc::nn_assign(mk, tg) != base_nn) ++violations;
        }
    }
    report(8, "scale invariance", violations == 0);
}

TEST_CASE("acceptance: ablation machinery reproduction") {
    core::PipelineConfig cfg;
    cfg.num_layers = 3;
    cfg.tokens_per_frame = 32;
    cfg.budget_total = 3 * 96;
    cfg.rng_seed = 77;
    bool ok = true;

    // Axis values and cell counts of the published sweep tables.
    using harness::SweepAxis;
    ok &= harness::default_axis_values(SweepAxis::Lambda) ==
          std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0};
    ok &= harness::default_axis_values(SweepAxis::Window) ==
          std::vector<double>{3, 5, 7, 10};
    ok &= harness::default_axis_values(SweepAxis::MergeRatio) ==
          std::vector<double>{0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
    ok &= harness::default_axis_values(SweepAxis::Components).size() == 4;

    const auto lam = harness::sweep(cfg, SweepAxis::Lambda, {}, 6);
    const auto win = harness::sweep(cfg, SweepAxis::Window, {}, 6);
    const auto mr = harness::sweep(cfg, SweepAxis::MergeRatio, {}, 6);
    const auto comp = harness::sweep(cfg, SweepAxis::Components, {}, 6);
    ok &= lam.size() == 5 && win.size() == 4 && mr.size() == 6 &&
          comp.size() == 4;

    // total_merged grows with the merge ratio.
    for (std::size_t i = 1; i < mr.size(); ++i)
        ok &= mr[i].report.total_merged >= mr[i - 1].report.total_merged;
    ok &= mr.back().report.total_merged > mr.front().report.total_merged;

    // Cons dispersion across tokens shrinks as the window widens past 2.
    std::mt19937_64 rng(79);
    double prev_sd = 1e300;
    for (int w : {3, 5, 7, 10}) {
        const std::size_t n = 20'000;
        clces::RankWindow null_win(static_cast<std::size_t>(w));
        for (int c = 0; c < w; ++c)
            null_win.push_layer(random_permutation_ranks(n, rng));
        const auto cons = null_win.consistency().consistency;
        double mean = 0.0, var = 0.0;
        for (double v : cons) mean += v;
        mean /= static_cast<double>(n);
        for (double v : cons) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(n - 1));
        ok &= sd < prev_sd;
        prev_sd = sd;
    }
    report(9, "ablation machinery reproduction", ok);
}

TEST_CASE("acceptance: determinism and replay") {
    bool ok = true;
    for (int run = 0; run < 10 && ok; ++run) {
        core::PipelineConfig cfg;
        cfg.num_layers = 2;
        cfg.tokens_per_frame = 24;
        cfg.budget_total = 2 * 72;
        cfg.rng_seed = 9000 + run;
        const auto path = (std::filesystem::temp_directory_path() /
                           ("acceptance_replay_" + std::to_string(run) +
                            ".skvt"))
                              .string();
        scoresrc::save_trace(harness::generate_stream(cfg, 8), path);
        const auto live = harness::run_toy(cfg, 8);
        const auto live2 = harness::run_toy(cfg, 8);
        const auto replay = harness::run_trace(cfg, path);
        std::filesystem::remove(path);
        ok = live.same_outcome(replay) && live.same_outcome(live2);
    }
    report(10, "determinism and replay", ok);
}

TEST_CASE("acceptance: throughput sanity") {
    core::PipelineConfig cfg;
    cfg.num_layers = 8;
    cfg.tokens_per_frame = 64;
    cfg.budget_total = 8 * 512;
    cfg.rng_seed = 99;
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = harness::run_toy(cfg, 100);
    const double sec = elapsed_sec(t0);
    report(11, "throughput sanity", rep.per_frame.size() == 100 && sec < 60.0);
}
