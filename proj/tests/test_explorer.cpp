#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rcuguard/corpus.hpp"
#include "rcuguard/explorer.hpp"

using namespace rcuguard;

namespace {

CompiledProgram compile_src(const std::string& src, std::optional<int> readers = {}) {
    auto r = parse(src);
    if (!r.ok())
        for (const auto& d : r.diagnostics)
            MESSAGE(d.pos.line, ":", d.pos.col, " ", d.message);
    REQUIRE(r.ok());
    return compile(*r.program, readers);
}

HeapSeed seed_of(const std::string& text) {
    std::string err;
    auto s = parse_heap_seed(text, &err);
    REQUIRE_MESSAGE(s.has_value(), err);
    return *s;
}

HeapSeed seed_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return seed_of(ss.str());
}

const char* kList3 = "n0 Next=n1 data=1\nn1 Next=n2 data=0\nn2 data=1\n";

std::set<std::string> reasons(const ExploreReport& r) {
    std::set<std::string> out;
    for (const auto& v : r.violations) out.insert(v.reason);
    return out;
}

const char* kMicroNoSync = R"(fields { Next: rcu, data: normal }
root head;
writer remove {
  rcu_write head.Next as w {
    par = head;
    cur = par.Next;
    curl = cur.Next;
    par.Next = curl;
    free(cur);
  }
}
reader peek {
  rcu_read head.Next as itr {
    d = itr.data;
  }
}
)";

const char* kMicroSafe = R"(fields { Next: rcu, data: normal }
root head;
writer remove {
  rcu_write head.Next as w {
    par = head;
    cur = par.Next;
    curl = cur.Next;
    par.Next = curl;
    sync_start;
    sync_stop;
    free(cur);
  }
}
reader peek {
  rcu_read head.Next as itr {
    d = itr.data;
  }
}
)";

}  // namespace

TEST_CASE("empty program explores a single state") {
    auto prog = compile_src("fields { Next: rcu }\nroot head;\n");
    ExploreBounds b;
    auto rep = explore(prog, seed_of("n0\n"), b);
    CHECK(rep.states_explored == 1);
    CHECK(rep.schedules_completed == 1);
    CHECK(rep.violations.empty());
    CHECK(rep.exhausted);
}

TEST_CASE("corpus bag remove is safe and exhausted within bounds") {
    auto dir = default_corpus_dir();
    auto r = parse_file(dir + "/bag_remove.rcu");
    REQUIRE(r.ok());
    auto prog = compile(*r.program, 2);
    ExploreBounds b;
    b.max_steps = 40;
    auto rep = explore(prog, seed_file(dir + "/heaps/list3_first.heap"), b);
    CHECK(rep.violations.empty());
    CHECK(rep.exhausted);
    // Regression golden: the canonicalized state count for this fixed
    // configuration.
    CHECK(rep.states_explored == 1681);
}

TEST_CASE("the no-sync mutant yields a UseAfterFree schedule that replays") {
    auto dir = default_corpus_dir();
    auto r = parse_file(dir + "/neg/no_sync_before_free.rcu");
    REQUIRE(r.ok());
    auto prog = compile(*r.program, 2);
    ExploreBounds b;
    auto seed = seed_file(dir + "/heaps/list3_first.heap");
    auto rep = explore(prog, seed, b);
    const ViolationRecord* uaf = nullptr;
    for (const auto& v : rep.violations)
        if (v.reason == "fault:UseAfterFree") uaf = &v;
    REQUIRE(uaf != nullptr);

    auto rr = replay(prog, seed, uaf->schedule);
    CHECK_FALSE(rr.divergence.has_value());
    CHECK_FALSE(rr.verdict.safe);
    CHECK(std::find(rr.verdict.reasons.begin(), rr.verdict.reasons.end(),
                    "fault:UseAfterFree") != rr.verdict.reasons.end());
    CHECK(rr.trace.size() == uaf->schedule.size());
}

TEST_CASE("replay of a writer-first schedule on the bag is safe") {
    auto dir = default_corpus_dir();
    auto r = parse_file(dir + "/bag_remove.rcu");
    REQUIRE(r.ok());
    auto prog = compile(*r.program, 2);
    auto seed = seed_file(dir + "/heaps/list3_first.heap");
    // Writer runs to completion, then each reader.
    std::vector<ThreadId> sched;
    for (int i = 0; i < 12; ++i) sched.push_back(0);
    for (int i = 0; i < 9; ++i) sched.push_back(1);
    for (int i = 0; i < 9; ++i) sched.push_back(2);
    auto rr = replay(prog, seed, sched);
    if (rr.divergence) MESSAGE(rr.error);
    CHECK_FALSE(rr.divergence.has_value());
    CHECK(rr.verdict.safe);
}

TEST_CASE("replay reports divergence for a disabled or bogus choice") {
    auto prog = compile_src(kMicroSafe);
    auto seed = seed_of(kList3);
    auto rr = replay(prog, seed, {9});
    REQUIRE(rr.divergence.has_value());
    CHECK(*rr.divergence == 1);
    // Scheduling the writer past its lock-blocked SyncStop also diverges.
    auto rr2 = replay(prog, seed, {1, 0, 0, 0, 0, 0, 0, 0, 0});
    CHECK(rr2.divergence.has_value());
}

TEST_CASE("dedup preserves the set of verdict reasons") {
    for (const char* src : {kMicroNoSync, kMicroSafe}) {
        auto prog = compile_src(src);
        auto seed = seed_of(kList3);
        ExploreBounds on;
        on.dedup = true;
        ExploreBounds off = on;
        off.dedup = false;
        auto rep_on = explore(prog, seed, on);
        auto rep_off = explore(prog, seed, off);
        CHECK(reasons(rep_on) == reasons(rep_off));
        CHECK(rep_on.exhausted == rep_off.exhausted);
        CHECK(rep_on.states_explored <= rep_off.states_explored);
    }
}

TEST_CASE("step bound reports non-exhaustion instead of an error") {
    auto prog = compile_src(kMicroSafe);
    ExploreBounds b;
    b.max_steps = 5;
    auto rep = explore(prog, seed_of(kList3), b);
    CHECK_FALSE(rep.exhausted);
    CHECK(rep.violations.empty());
}

TEST_CASE("canonical state merges reader symmetry") {
    auto prog = compile_src(kMicroSafe, 2);
    auto m1 = *Machine::init(prog, seed_of(kList3), nullptr);
    auto m2 = *Machine::init(prog, seed_of(kList3), nullptr);
    auto l1 = logical_init(prog, m1.state());
    auto l2 = logical_init(prog, m2.state());
    // Reader 1 advances in one machine, reader 2 in the other.
    auto advance_reader = [](Machine& m, LogicalState& ls, ThreadId t) {
        MachineState pre = m.state();
        StepInfo si;
        REQUIRE_FALSE(m.step(t, &si).has_value());
        ls = advance(ls, pre, si, m.state());
    };
    advance_reader(m1, l1, 1);
    advance_reader(m2, l2, 2);
    CHECK(canonical_state(m1, l1) == canonical_state(m2, l2));
    CHECK(state_hash(m1, l1) == state_hash(m2, l2));
}

TEST_CASE("exploration is deterministic run to run") {
    auto prog = compile_src(kMicroNoSync);
    auto seed = seed_of(kList3);
    ExploreBounds b;
    auto a = explore(prog, seed, b);
    auto c = explore(prog, seed, b);
    CHECK(a.states_explored == c.states_explored);
    CHECK(a.schedules_completed == c.schedules_completed);
    CHECK(reasons(a) == reasons(c));
    for (size_t i = 0; i < a.violations.size(); ++i)
        CHECK(a.violations[i].schedule == c.violations[i].schedule);
}
