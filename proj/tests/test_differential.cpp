#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "rcuguard/checker.hpp"
#include "rcuguard/corpus.hpp"
#include "rcuguard/explorer.hpp"

// Differential soundness under mutation: random statement deletions, swaps
// and duplications applied to the writer bodies of the corpus positives.
// Whatever the checker still accepts must explore without reclamation
// violations. Machine faults outside the reclamation claims (null
// dereferences, root-store refusals) are tolerated: the type system does
// not track value nullness.

using namespace rcuguard;

namespace {

HeapSeed seed_for(const CorpusManifest& m, const CorpusCase& c) {
    std::ifstream f(m.path_of(c.seed_heap));
    std::stringstream ss;
    ss << f.rdbuf();
    std::string err;
    auto seed = parse_heap_seed(ss.str(), &err);
    REQUIRE_MESSAGE(seed.has_value(), err);
    return *seed;
}

// Every Seq node reachable inside the statement, including nested ones.
void collect_seqs(Stmt& s, std::vector<Stmt*>& out) {
    if (s.kind == StmtKind::Seq) out.push_back(&s);
    for (auto& c : s.children) collect_seqs(c, out);
}

struct Mutator {
    std::mt19937 rng;
    explicit Mutator(unsigned seed) : rng(seed) {}

    int pick(int n) { return static_cast<int>(rng() % n); }

    // Applies one random mutation to some writer block; returns false when
    // the dice landed on an empty spot.
    bool mutate(Program& p) {
        std::vector<Stmt*> seqs;
        for (auto& t : p.threads) {
            if (t.kind != ThreadKind::Writer) continue;
            for (auto& b : t.blocks) collect_seqs(b.body, seqs);
        }
        if (seqs.empty()) return false;
        Stmt& seq = *seqs[pick(static_cast<int>(seqs.size()))];
        auto& kids = seq.children;
        // Assertion sites are inert; mutate real statements only.
        std::vector<int> real;
        for (int j = 0; j < static_cast<int>(kids.size()); ++j)
            if (kids[j].kind != StmtKind::AssertSite) real.push_back(j);
        if (real.empty()) return false;
        int op = pick(3);
        int i = real[pick(static_cast<int>(real.size()))];
        if (op == 0) {
            // Deletion; grace periods leave or stay as a pair.
            if (kids[i].kind == StmtKind::SyncStart && i + 1 < static_cast<int>(kids.size()) &&
                kids[i + 1].kind == StmtKind::SyncStop) {
                kids.erase(kids.begin() + i, kids.begin() + i + 2);
            } else if (kids[i].kind == StmtKind::SyncStop && i > 0 &&
                       kids[i - 1].kind == StmtKind::SyncStart) {
                kids.erase(kids.begin() + i - 1, kids.begin() + i + 1);
            } else {
                kids.erase(kids.begin() + i);
            }
            return true;
        }
        if (op == 1) {
            // Swap two neighbouring real statements.
            if (real.size() < 2) return false;
            int x = pick(static_cast<int>(real.size()) - 1);
            std::swap(kids[real[x]], kids[real[x + 1]]);
            return true;
        }
        kids.insert(kids.begin() + i, kids[i]);
        return true;
    }
};

}  // namespace

TEST_CASE("checker-accepted mutants explore without reclamation violations") {
    std::string err;
    auto m = load_corpus(default_corpus_dir(), &err);
    REQUIRE_MESSAGE(m.has_value(), err);

    Mutator mut(20260808);
    int accepted = 0, rejected = 0, skipped = 0;
    for (const auto& c : m->positives) {
        if (c.name == "bag_member") continue;  // no writer to mutate
        auto base = parse_file(m->path_of(c.file));
        REQUIRE(base.ok());
        auto seed = seed_for(*m, c);
        for (int round = 0; round < 60; ++round) {
            Program mutant = *base.program;
            int edits = 1 + mut.pick(2);
            bool changed = false;
            for (int e = 0; e < edits; ++e) changed |= mut.mutate(mutant);
            if (!changed) {
                ++skipped;
                continue;
            }
            auto report = check_program(mutant);
            if (!report.ok()) {
                ++rejected;
                continue;
            }
            ++accepted;
            auto prog = compile(mutant, c.readers);
            ExploreBounds b;
            b.max_steps = c.max_steps;
            b.max_heap_nodes = c.max_heap + 4;  // duplicated allocs
            b.reader_count = c.readers;
            auto rep = explore(prog, seed, b);
            for (const auto& v : rep.violations) {
                bool tolerated = v.reason == "fault:NullDeref" ||
                                 v.reason == "fault:RootOverwrite";
                INFO(c.name, " mutant round ", round, ": ", v.reason, " (", v.detail, ")");
                CHECK(tolerated);
            }
        }
    }
    MESSAGE("mutants: ", accepted, " accepted, ", rejected, " rejected, ", skipped,
            " unchanged");
    // The campaign must actually exercise both sides.
    CHECK(accepted > 10);
    CHECK(rejected > 50);
}
