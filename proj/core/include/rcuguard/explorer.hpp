#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcuguard/machine.hpp"
#include "rcuguard/oracle.hpp"

// Bounded exhaustive exploration of thread interleavings, driving the
// machine and the logical-state monitor to find safety violations or
// certify their absence within the bounds. Depth-first over scheduler
// choices among enabled threads; visited states are memoized under a
// canonical form that renames locations by traversal order and sorts
// replicated readers by their local state.

namespace rcuguard {

struct ExploreBounds {
    int max_steps = 40;
    int max_heap_nodes = 8;   // live plus tombstoned
    int reader_count = 2;     // replaces reader replica counts
    bool dedup = true;
};

struct ViolationRecord {
    std::string reason;               // fault:UseAfterFree, axiom:OW, lifecycle
    std::string detail;
    std::vector<ThreadId> schedule;   // replayable
    int step = 0;
};

struct ExploreReport {
    long states_explored = 0;
    long schedules_completed = 0;
    long dedup_hits = 0;
    std::vector<ViolationRecord> violations;  // first per distinct reason
    std::map<std::string, long> reason_counts;
    bool exhausted = true;

    bool safe() const { return violations.empty(); }
};

struct ExploreOptions {
    int check_axioms_every = 1;  // --sample N
    bool track_lifecycle = true;
};

ExploreReport explore(const CompiledProgram& prog, const HeapSeed& seed,
                      const ExploreBounds& bounds, const ExploreOptions& opts = {});

// ---------------------------------------------------------------------------
// Replay

struct TraceLine {
    int step = 0;
    ThreadId tid = 0;
    std::string rule;
    std::string state_hash;
};

struct ReplayResult {
    std::vector<TraceLine> trace;
    Verdict verdict;
    std::vector<Fault> faults;
    std::vector<Violation> violations;
    // Set when a schedule entry was not enabled; index of the bad step.
    std::optional<int> divergence;
    std::string error;
    MachineState final_state;
};

ReplayResult replay(const CompiledProgram& prog, const HeapSeed& seed,
                    const std::vector<ThreadId>& schedule, const ExploreOptions& opts = {});

// Canonical serialization of machine + logical state + thread states;
// equal strings identify states up to location names and reader symmetry.
std::string canonical_state(const Machine& m, const LogicalState& ls);
// Short hash of the canonical form, printed in traces.
std::string state_hash(const Machine& m, const LogicalState& ls);

}  // namespace rcuguard
