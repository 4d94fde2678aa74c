#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rcuguard/machine.hpp"

// Logical state riding alongside the machine: per-location observations,
// the undefined-variable set, the thread set and the to-free map. A
// runtime monitor advances it on every machine step and checks the
// well-formedness memory axioms (OW, RWOW, AWRT, IFL, ULKR, FLR, WULK,
// FR, WF, FNR, FPI, WNR, RITR, RINFL, HD, UNQRT, UNQR) against the
// combined state. The monitor is independent of the type checker: node
// unlinking is detected by a root-reachability diff over heap writes, not
// by trusting the program.

namespace rcuguard {

struct Obs {
    enum class Kind { Iterator, Unlinked, Fresh, Freeable, Root };
    Kind kind = Kind::Iterator;
    ThreadId tid = -1;  // Iterator only

    static Obs iterator(ThreadId t) { return {Kind::Iterator, t}; }
    static Obs unlinked() { return {Kind::Unlinked, -1}; }
    static Obs fresh() { return {Kind::Fresh, -1}; }
    static Obs freeable() { return {Kind::Freeable, -1}; }
    static Obs root() { return {Kind::Root, -1}; }

    bool operator==(const Obs&) const = default;
    auto operator<=>(const Obs&) const = default;
};

std::string to_string(const Obs& o);

// Lifecycle stages for the per-location observation history.
enum class LifeStage { Fresh = 0, Iterator = 1, Unlinked = 2, Freeable = 3, Undef = 4 };

struct LogicalState {
    std::map<Loc, std::set<Obs>> obs;                       // O
    std::set<std::pair<std::string, ThreadId>> undef_vars;  // U
    std::set<ThreadId> threads;                             // T
    std::map<Loc, std::set<ThreadId>> to_free;              // F
    std::map<Loc, std::vector<LifeStage>> history;          // per-loc stage events

    bool operator==(const LogicalState& other) const {
        return obs == other.obs && undef_vars == other.undef_vars &&
               threads == other.threads && to_free == other.to_free;
    }
};

// Initial logical state: the root observed as root, every variable of every
// thread undefined.
LogicalState logical_init(const CompiledProgram& prog, const MachineState& ms);

// Transfer function for one machine step; pre/post machine states bracket
// the step described by `info`. Never blocks execution, only records.
LogicalState advance(const LogicalState& ls, const MachineState& pre, const StepInfo& info,
                     const MachineState& post);

struct Violation {
    std::string axiom;
    std::string witness;
};

// Empty iff WellFormed(sigma, O, U, T, F) holds.
std::vector<Violation> check_axioms(const LogicalState& ls, const MachineState& ms);

// Locations whose recorded stage events are not a subsequence of
// fresh -> iterator -> unlinked -> freeable -> undef.
std::vector<Loc> lifecycle_violations(const LogicalState& ls);

struct Verdict {
    bool safe = true;
    std::vector<std::string> reasons;
};

Verdict safety_verdict(const std::vector<Fault>& faults, const std::vector<Violation>& violations);

}  // namespace rcuguard
