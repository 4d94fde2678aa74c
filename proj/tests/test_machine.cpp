#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rcuguard/machine.hpp"

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

const char* kList3 = "n0 Next=n1 data=1\nn1 Next=n2 data=0\nn2 data=1\n";

const char* kRemoveSrc = R"(fields { Next: rcu, data: normal }
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
reader peek * 2 {
  rcu_read head.Next as itr {
    d = itr.data;
  }
}
)";

void run_all(Machine& m, const std::vector<ThreadId>& sched) {
    for (ThreadId t : sched) {
        REQUIRE(m.enabled(t));
        auto f = m.step(t);
        REQUIRE_FALSE(f.has_value());
    }
}

}  // namespace

TEST_CASE("init accepts trees and rejects everything else") {
    auto prog = compile_src(kRemoveSrc);
    std::string err;
    CHECK(Machine::init(prog, seed_of(kList3), &err).has_value());
    // Empty list: root with Next = null.
    CHECK(Machine::init(prog, seed_of("n0 data=1\n"), &err).has_value());
    // Two parents for one node.
    CHECK_FALSE(
        Machine::init(prog, seed_of("n0 Next=n2\nn1 Next=n2\nn2 data=0\n"), &err).has_value());
    // Unreachable node.
    CHECK_FALSE(Machine::init(prog, seed_of("n0 data=1\nn1 data=0\n"), &err).has_value());
    // Edge into the root.
    CHECK_FALSE(Machine::init(prog, seed_of("n0 Next=n1\nn1 Next=n0\n"), &err).has_value());
}

TEST_CASE("write lock and grace period blocking") {
    auto prog = compile_src(kRemoveSrc);
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);

    run_all(m, {1});  // reader 1 ReadBegin
    CHECK(m.state().readers == std::set<ThreadId>{1});

    REQUIRE(m.enabled(0));  // WriteBegin: lock unlocked
    run_all(m, {0});
    CHECK(m.state().lock == 0);

    // w, par, cur, curl reads, then the unlink.
    run_all(m, {0, 0, 0, 0, 0});
    REQUIRE(m.enabled(0));  // SyncStart with B empty
    run_all(m, {0});
    CHECK(m.state().bounding == std::set<ThreadId>{1});
    // SyncStop blocks until the blocking set empties.
    CHECK_FALSE(m.enabled(0));
    run_all(m, {1, 1, 1});  // reader: itr read, data read, ReadEnd
    CHECK(m.state().bounding.empty());
    CHECK(m.enabled(0));
}

TEST_CASE("ReadEnd removes the reader from R and B") {
    auto prog = compile_src(kRemoveSrc);
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    run_all(m, {1, 2});
    CHECK(m.state().readers == std::set<ThreadId>{1, 2});
    run_all(m, {0, 0, 0, 0, 0, 0, 0});  // through SyncStart
    CHECK(m.state().bounding == std::set<ThreadId>{1, 2});
    run_all(m, {1, 1, 1});
    CHECK(m.state().readers == std::set<ThreadId>{2});
    CHECK(m.state().bounding == std::set<ThreadId>{2});
}

TEST_CASE("Free tombstones every field; other objects keep theirs") {
    auto prog = compile_src(kRemoveSrc);
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    while (!m.done(0)) {
        REQUIRE(m.enabled(0));
        REQUIRE_FALSE(m.step(0).has_value());
    }
    const auto& heap = m.state().heap;
    CHECK(heap.at(1).dead);
    for (const auto& [f, v] : heap.at(1).fields) CHECK(v == Val::undef());
    CHECK(heap.at(0).fields.at("Next") == Val::loc(2));
    CHECK_FALSE(heap.at(0).dead);
    CHECK_FALSE(heap.at(2).dead);
}

TEST_CASE("a reader forced past a premature free faults with UseAfterFree") {
    auto prog = compile_src(R"(fields { Next: rcu, data: normal }
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
)");
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    run_all(m, {1, 1});  // ReadBegin; itr = head.Next (= n1)
    while (!m.done(0)) {
        REQUIRE(m.enabled(0));
        REQUIRE_FALSE(m.step(0).has_value());
    }
    REQUIRE(m.enabled(1));
    auto fault = m.step(1);  // d = itr.data on the tombstone
    REQUIRE(fault.has_value());
    CHECK(fault->kind == Fault::Kind::UseAfterFree);
}

TEST_CASE("double free faults") {
    auto prog = compile_src(R"(fields { Next: rcu, data: normal }
root head;
writer remove {
  rcu_write head.Next as w {
    par = head;
    cur = par.Next;
    curl = cur.Next;
    par.Next = curl;
    free(cur);
    free(cur);
  }
}
)");
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    std::optional<Fault> fault;
    while (!m.done(0) && !fault) fault = m.step(0);
    REQUIRE(fault.has_value());
    CHECK(fault->kind == Fault::Kind::DoubleFree);
}

TEST_CASE("storing a root reference faults with RootOverwrite") {
    auto prog = compile_src(R"(fields { Next: rcu, data: normal }
root head;
writer bad {
  rcu_write head.Next as w {
    par = head;
    cur = par.Next;
    cur.Next = par;
  }
}
)");
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    std::optional<Fault> fault;
    while (!m.done(0) && !fault) fault = m.step(0);
    REQUIRE(fault.has_value());
    CHECK(fault->kind == Fault::Kind::RootOverwrite);
}

TEST_CASE("writes inside a read block fault defensively") {
    auto prog = compile_src(R"(fields { Next: rcu, data: normal }
root head;
reader bad {
  rcu_read head.Next as itr {
    cur = head;
    cur.Next = itr;
  }
}
)");
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    std::optional<Fault> fault;
    while (!m.done(0) && !fault) fault = m.step(0);
    REQUIRE(fault.has_value());
    CHECK(fault->kind == Fault::Kind::WriteInReadBlock);
}

TEST_CASE("locals die at the block boundary") {
    auto prog = compile_src(R"(fields { Next: rcu, data: normal }
root head;
reader bad {
  rcu_read head.Next as itr {
    cur = head;
  }
  rcu_read head.Next as itr2 {
    cur2 = cur.Next;
  }
}
)");
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    std::optional<Fault> fault;
    while (!m.done(0) && !fault) fault = m.step(0);
    REQUIRE(fault.has_value());
    CHECK(fault->kind == Fault::Kind::UndefLocal);
}

TEST_CASE("step is deterministic") {
    auto prog = compile_src(kRemoveSrc);
    auto a = *Machine::init(prog, seed_of(kList3), nullptr);
    auto b = *Machine::init(prog, seed_of(kList3), nullptr);
    std::vector<ThreadId> sched = {1, 0, 2, 0, 1, 0, 0, 2, 1, 0};
    for (ThreadId t : sched) {
        if (!a.enabled(t)) {
            CHECK_FALSE(b.enabled(t));
            continue;
        }
        (void)a.step(t);
        (void)b.step(t);
        CHECK(a.state() == b.state());
        CHECK(a.thread_states() == b.thread_states());
    }
}

TEST_CASE("frame: a step touches only its own locals and the written cell") {
    auto prog = compile_src(kRemoveSrc);
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    run_all(m, {1, 0, 0});  // reader begins; writer begins + block read
    MachineState before = m.state();
    StepInfo si;
    REQUIRE_FALSE(m.step(0, &si).has_value());  // par = head: writer stack only
    MachineState after = m.state();
    CHECK(after.heap == before.heap);
    CHECK(after.readers == before.readers);
    CHECK(after.bounding == before.bounding);
    CHECK(after.lock == before.lock);
    for (const auto& [key, v] : after.stack) {
        if (key.second == 0) continue;
        auto it = before.stack.find(key);
        REQUIRE(it != before.stack.end());
        CHECK(it->second == v);
    }
}

TEST_CASE("alloc picks the least unused location and never reuses") {
    auto prog = compile_src(R"(fields { Next: rcu, data: normal }
root head;
writer add {
  rcu_write head.Next as w {
    nw = new;
    nw.Next = null;
  }
}
)");
    auto m = *Machine::init(prog, seed_of(kList3), nullptr);
    StepInfo si;
    run_all(m, {0, 0});
    REQUIRE_FALSE(m.step(0, &si).has_value());
    REQUIRE(si.alloc_loc.has_value());
    CHECK(*si.alloc_loc == 3);  // three seed nodes occupy 0..2
    CHECK(m.state().heap.at(3).fields.at("Next") == Val::null());
}

TEST_CASE("reader replication override") {
    auto prog = compile_src(kRemoveSrc, 4);
    CHECK(prog.threads.size() == 5);
    CHECK(prog.threads[0].kind == ThreadKind::Writer);
}

TEST_CASE("lock exclusion and grace monotonicity along random walks") {
    auto prog = compile_src(kRemoveSrc);
    std::mt19937 rng(51);
    for (int run = 0; run < 200; ++run) {
        auto m = *Machine::init(prog, seed_of(kList3), nullptr);
        for (int step = 0; step < 60; ++step) {
            auto enabled = m.enabled_threads();
            if (enabled.empty()) break;
            ThreadId t = enabled[rng() % enabled.size()];
            auto before = m.state().bounding;
            StepInfo si;
            REQUIRE_FALSE(m.step(t, &si).has_value());
            // B grows only at SyncStart; every other step may only shrink it.
            if (si.rule != "RCU-SStart") {
                for (ThreadId b : m.state().bounding) CHECK(before.count(b));
            }
            // At most one thread holds the lock, and it is never a reader.
            if (m.state().lock != kUnlocked) CHECK_FALSE(m.state().readers.count(m.state().lock));
        }
    }
}
