#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <set>
#include <string>

#include "criteria.hpp"

namespace {

struct Criterion {
    int id;
    const char* name;
    hart::acceptance::Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient-correctness", hart::acceptance::gradient_correctness},
    {2, "reduction-invariant", hart::acceptance::reduction_invariant},
    {3, "causality-suite", hart::acceptance::causality_suite},
    {4, "history-vs-no-history-perplexity", hart::acceptance::directional_perplexity},
    {5, "history-sweep-trend", hart::acceptance::history_trend},
    {6, "recurrence-ablation-document-f1", hart::acceptance::recurrence_ablation},
    {7, "metric-oracles", hart::acceptance::metric_oracles},
    {8, "user-level-pipeline", hart::acceptance::user_pipeline},
    {9, "determinism", hart::acceptance::determinism},
};

}  // namespace

// Usage: hart_acceptance [criterion ids...]  (default: all)
int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : kCriteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        hart::acceptance::Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
