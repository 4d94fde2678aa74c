#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rcuguard/lang.hpp"

// Deterministic small-step abstract machine for the RCU operational
// semantics. One atomic action per step; the scheduler (an explorer or a
// replayed schedule) picks which thread moves.
//
// Machine state sigma = (s, h, l, rt, R, B): per-thread stacks, heap,
// writer lock, root location, reader set and bounding set. WriteBegin
// acquires the lock only when unlocked; SyncStart snapshots the readers
// into B; SyncStop and Free block until B is empty; ReadEnd removes the
// reader from R and B. Free tombstones the object: every field becomes
// undef and the location is never reused.

namespace rcuguard {

using ThreadId = int;
using Loc = int;

struct Val {
    enum class Kind { Loc, Null, Int, Undef };
    Kind kind = Kind::Null;
    int num = 0;  // Loc id or Int payload

    static Val loc(Loc l) { return {Kind::Loc, l}; }
    static Val null() { return {Kind::Null, 0}; }
    static Val integer(int n) { return {Kind::Int, n}; }
    static Val undef() { return {Kind::Undef, 0}; }

    bool is_loc() const { return kind == Kind::Loc; }
    bool truthy() const { return kind == Kind::Int ? num != 0 : kind == Kind::Loc; }

    bool operator==(const Val&) const = default;
    auto operator<=>(const Val&) const = default;
};

struct HeapObj {
    std::map<std::string, Val> fields;
    bool dead = false;

    bool operator==(const HeapObj&) const = default;
};

inline constexpr ThreadId kUnlocked = -1;

struct MachineState {
    std::map<std::pair<std::string, ThreadId>, Val> stack;
    std::map<Loc, HeapObj> heap;
    ThreadId lock = kUnlocked;
    Loc root = 0;
    std::set<ThreadId> readers;   // R
    std::set<ThreadId> bounding;  // B
    Loc next_loc = 0;             // allocation never reuses ids

    bool operator==(const MachineState&) const = default;
};

// ---------------------------------------------------------------------------
// Compiled programs

enum class OpCode {
    WriteBegin, WriteEnd, ReadBegin, ReadEnd, SyncStart, SyncStop,
    Free,        // Free(a)
    Alloc,       // a = new
    RootRead,    // a = rt
    VarRead,     // b = a
    HeapRead,    // b = a.f
    HeapWrite,   // a.f = b | null
    DataRead,    // b = a.f     (normal field)
    DataWrite,   // a.f = b
    Skip,
    BranchBool,      // if s(a) falsy jump to target
    BranchFieldEq,   // if h(s(a),f) != s(b) jump to target
    BranchFieldNull, // if h(s(a),f) != null jump to target
    LoopGuard,       // if !(h(s(a),f) != null [&& s(flag)]) jump to target
    Jump,            // unconditional; free (not a scheduled step)
    Halt,
};

struct Instr {
    OpCode op = OpCode::Halt;
    std::string a, b, field, flag;
    bool rhs_null = false;
    int target = -1;
    SourceSpan span;
};

enum class BlockPhase { Outside, InRead, InWrite };

struct CompiledThread {
    ThreadId tid = 0;
    std::string name;
    ThreadKind kind = ThreadKind::Reader;
    int group = 0;  // replicas of one declaration share a group
    std::vector<Instr> code;
};

struct CompiledProgram {
    std::string root_var;
    FieldTypeTable fields;
    std::vector<CompiledThread> threads;  // replicas expanded; writer first
};

// Expands reader replicas; `reader_override`, when set, replaces each reader
// declaration's replica count.
CompiledProgram compile(const Program& p, std::optional<int> reader_override = {});

// ---------------------------------------------------------------------------
// Faults and steps

struct Fault {
    enum class Kind {
        UseAfterFree,
        NullDeref,
        DoubleFree,
        RootOverwrite,
        UndefLocal,
        WriteInReadBlock,
    };
    Kind kind;
    ThreadId tid = 0;
    std::string detail;
};

std::string to_string(Fault::Kind k);

// What a step did; consumed by the logical-state monitor.
struct StepInfo {
    ThreadId tid = 0;
    OpCode op = OpCode::Skip;
    std::string rule;                  // HUpdt, HRead, RCU-WBegin, ...
    std::optional<Loc> alloc_loc;
    std::optional<Loc> freed_loc;
    std::optional<Loc> read_target;    // rcu-valued loc acquired by the stack
    std::optional<Loc> write_target;   // loc stored into a heap field
    std::optional<std::pair<std::string, ThreadId>> assigned_var;
    bool heap_changed = false;
};

struct ThreadState {
    int pc = 0;
    BlockPhase phase = BlockPhase::Outside;
    bool done() const { return pc < 0; }

    bool operator==(const ThreadState&) const = default;
};

struct HeapSeedNode {
    std::string name;
    std::map<std::string, std::string> fields;  // field -> "null" | loc name | int
};

struct HeapSeed {
    std::vector<HeapSeedNode> nodes;  // first node is the root
};

// `(loc, field=value, ...)` lines; '#' starts a comment.
std::optional<HeapSeed> parse_heap_seed(const std::string& text, std::string* error);
// Default list-shaped seed: root plus n-1 nodes linked through the first rcu
// field; the last real node carries data 0.
HeapSeed default_list_seed(const FieldTypeTable& fields, int nodes);

class Machine {
  public:
    // Rejects seeds that do not form a tree rooted at the first node.
    static std::optional<Machine> init(const CompiledProgram& prog, const HeapSeed& seed,
                                       std::string* error);

    bool enabled(ThreadId tid) const;
    bool done(ThreadId tid) const { return threads_[tid].done(); }
    bool all_done() const;
    std::vector<ThreadId> enabled_threads() const;

    // Precondition: enabled(tid). Returns the fault, if any; on fault the
    // thread halts.
    std::optional<Fault> step(ThreadId tid, StepInfo* info = nullptr);

    const MachineState& state() const { return ms_; }
    const std::vector<ThreadState>& thread_states() const { return threads_; }
    const CompiledProgram& program() const { return *prog_; }
    int thread_count() const { return static_cast<int>(threads_.size()); }

    MachineState& mutable_state() { return ms_; }
    std::vector<ThreadState>& mutable_threads() { return threads_; }

  private:
    const Instr& at(ThreadId tid) const { return prog_->threads[tid].code[threads_[tid].pc]; }
    void advance(ThreadId tid);
    void jump(ThreadId tid, int target);
    std::optional<Val> read_var(ThreadId tid, const std::string& var, Fault* fault) const;

    const CompiledProgram* prog_ = nullptr;
    MachineState ms_;
    std::vector<ThreadState> threads_;
};

}  // namespace rcuguard
