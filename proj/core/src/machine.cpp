#include "rcuguard/machine.hpp"

#include <cassert>
#include <sstream>

namespace rcuguard {

std::string to_string(Fault::Kind k) {
    switch (k) {
        case Fault::Kind::UseAfterFree: return "UseAfterFree";
        case Fault::Kind::NullDeref: return "NullDeref";
        case Fault::Kind::DoubleFree: return "DoubleFree";
        case Fault::Kind::RootOverwrite: return "RootOverwrite";
        case Fault::Kind::UndefLocal: return "UndefLocal";
        case Fault::Kind::WriteInReadBlock: return "WriteInReadBlock";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Compilation

namespace {

class ThreadCompiler {
  public:
    explicit ThreadCompiler(const Program& p) : prog_(p) {}

    std::vector<Instr> run(const ThreadDecl& t) {
        for (const auto& b : t.blocks) {
            emit(b.is_write ? OpCode::WriteBegin : OpCode::ReadBegin, b.span);
            // y = x.f entering the block.
            Instr read;
            read.op = OpCode::HeapRead;
            read.a = b.root_var;
            read.b = b.bind_var;
            read.field = b.field;
            read.span = b.span;
            code_.push_back(std::move(read));
            stmt(b.body);
            emit(b.is_write ? OpCode::WriteEnd : OpCode::ReadEnd, b.span);
        }
        emit(OpCode::Halt, {});
        return std::move(code_);
    }

  private:
    int here() const { return static_cast<int>(code_.size()); }

    void emit(OpCode op, SourceSpan span) {
        Instr i;
        i.op = op;
        i.span = span;
        code_.push_back(std::move(i));
    }

    void stmt(const Stmt& s) {
        switch (s.kind) {
            case StmtKind::Seq:
                for (const auto& c : s.children) stmt(c);
                return;
            case StmtKind::AssertSite:
                return;  // annotation only
            case StmtKind::Skip:
                emit(OpCode::Skip, s.span);
                return;
            case StmtKind::SyncStart:
                emit(OpCode::SyncStart, s.span);
                return;
            case StmtKind::SyncStop:
                emit(OpCode::SyncStop, s.span);
                return;
            case StmtKind::FreeStmt: {
                Instr i;
                i.op = OpCode::Free;
                i.a = s.var_a;
                i.span = s.span;
                code_.push_back(std::move(i));
                return;
            }
            case StmtKind::Alloc: {
                Instr i;
                i.op = OpCode::Alloc;
                i.a = s.var_a;
                i.span = s.span;
                code_.push_back(std::move(i));
                return;
            }
            case StmtKind::RootRead: {
                Instr i;
                i.op = OpCode::RootRead;
                i.a = s.var_a;
                i.span = s.span;
                code_.push_back(std::move(i));
                return;
            }
            case StmtKind::VarRead: {
                Instr i;
                i.op = OpCode::VarRead;
                i.a = s.var_a;  // source
                i.b = s.var_b;  // destination
                i.span = s.span;
                code_.push_back(std::move(i));
                return;
            }
            case StmtKind::FieldRead:
            case StmtKind::DataRead: {
                Instr i;
                i.op = s.kind == StmtKind::FieldRead ? OpCode::HeapRead : OpCode::DataRead;
                i.a = s.var_a;
                i.b = s.var_b;
                i.field = s.field;
                i.span = s.span;
                code_.push_back(std::move(i));
                return;
            }
            case StmtKind::FieldWrite:
            case StmtKind::DataWrite: {
                Instr i;
                i.op = s.kind == StmtKind::FieldWrite ? OpCode::HeapWrite : OpCode::DataWrite;
                i.a = s.var_a;
                i.b = s.var_b;
                i.field = s.field;
                i.rhs_null = s.rhs_null;
                i.span = s.span;
                code_.push_back(std::move(i));
                return;
            }
            case StmtKind::IfBool:
            case StmtKind::IfFieldEq:
            case StmtKind::IfFieldNull: {
                Instr br;
                br.op = s.kind == StmtKind::IfBool      ? OpCode::BranchBool
                        : s.kind == StmtKind::IfFieldEq ? OpCode::BranchFieldEq
                                                        : OpCode::BranchFieldNull;
                br.a = s.var_a;
                br.b = s.var_b;
                br.field = s.field;
                br.span = s.span;
                int br_at = here();
                code_.push_back(std::move(br));
                stmt(s.children[0]);
                Instr jmp;
                jmp.op = OpCode::Jump;
                jmp.span = s.span;
                int jmp_at = here();
                code_.push_back(std::move(jmp));
                code_[br_at].target = here();
                stmt(s.children[1]);
                code_[jmp_at].target = here();
                return;
            }
            case StmtKind::WhileBool:
            case StmtKind::WhileFieldNonNull: {
                int head = here();
                Instr guard;
                guard.op = s.kind == StmtKind::WhileBool ? OpCode::BranchBool : OpCode::LoopGuard;
                guard.a = s.var_a;
                guard.field = s.field;
                guard.flag = s.flag_var;
                guard.span = s.span;
                int guard_at = here();
                code_.push_back(std::move(guard));
                stmt(s.children[0]);
                Instr jmp;
                jmp.op = OpCode::Jump;
                jmp.target = head;
                jmp.span = s.span;
                code_.push_back(std::move(jmp));
                code_[guard_at].target = here();
                return;
            }
        }
    }

    const Program& prog_;
    std::vector<Instr> code_;
};

}  // namespace

CompiledProgram compile(const Program& p, std::optional<int> reader_override) {
    CompiledProgram cp;
    cp.root_var = p.root_var;
    cp.fields = p.field_types;
    // Writer first, then readers; stable order for canonical thread ids.
    std::vector<const ThreadDecl*> order;
    for (const auto& t : p.threads)
        if (t.kind == ThreadKind::Writer) order.push_back(&t);
    for (const auto& t : p.threads)
        if (t.kind == ThreadKind::Reader) order.push_back(&t);
    ThreadId tid = 0;
    int group = 0;
    for (const auto* t : order) {
        int replicas = t->replicas;
        if (t->kind == ThreadKind::Reader && reader_override) replicas = *reader_override;
        ThreadCompiler cc(p);
        auto code = cc.run(*t);
        for (int r = 0; r < replicas; ++r) {
            CompiledThread ct;
            ct.tid = tid++;
            ct.name = replicas == 1 ? t->name : t->name + "#" + std::to_string(r);
            ct.kind = t->kind;
            ct.group = group;
            ct.code = code;
            cp.threads.push_back(std::move(ct));
        }
        ++group;
    }
    return cp;
}

// ---------------------------------------------------------------------------
// Heap seeds

std::optional<HeapSeed> parse_heap_seed(const std::string& text, std::string* error) {
    HeapSeed seed;
    std::istringstream in(text);
    std::string line;
    auto fail = [&](const std::string& msg) {
        if (error) *error = msg;
        return std::nullopt;
    };
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string name;
        if (!(ls >> name)) continue;
        HeapSeedNode node;
        node.name = name;
        std::string kv;
        while (ls >> kv) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) return fail("expected field=value in: " + line);
            node.fields[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        seed.nodes.push_back(std::move(node));
    }
    if (seed.nodes.empty()) return fail("empty heap seed");
    return seed;
}

HeapSeed default_list_seed(const FieldTypeTable& fields, int nodes) {
    std::string link;
    for (const auto& [f, k] : fields.kinds)
        if (k == FieldKind::Rcu) {
            link = f;
            break;
        }
    HeapSeed seed;
    for (int i = 0; i < nodes; ++i) {
        HeapSeedNode n;
        n.name = "n" + std::to_string(i);
        if (i + 1 < nodes) n.fields[link] = "n" + std::to_string(i + 1);
        // Data 0 marks the last real node as the lookup/removal target.
        for (const auto& [f, k] : fields.kinds)
            if (k == FieldKind::Normal)
                n.fields[f] = (i + 1 == nodes) ? "0" : "1";
        seed.nodes.push_back(std::move(n));
    }
    return seed;
}

// ---------------------------------------------------------------------------
// Machine

std::optional<Machine> Machine::init(const CompiledProgram& prog, const HeapSeed& seed,
                                     std::string* error) {
    auto fail = [&](const std::string& msg) {
        if (error) *error = msg;
        return std::nullopt;
    };
    Machine m;
    m.prog_ = &prog;
    std::map<std::string, Loc> names;
    Loc next = 0;
    for (const auto& n : seed.nodes) {
        if (names.count(n.name)) return fail("duplicate heap node " + n.name);
        names[n.name] = next++;
    }
    for (const auto& n : seed.nodes) {
        HeapObj obj;
        for (const auto& [f, v] : n.fields) {
            auto kind = prog.fields.kind(f);
            if (!kind) return fail("unknown field in seed: " + f);
            if (*kind == FieldKind::Rcu) {
                if (v == "null") {
                    obj.fields[f] = Val::null();
                } else {
                    auto it = names.find(v);
                    if (it == names.end()) return fail("unknown heap node " + v);
                    obj.fields[f] = Val::loc(it->second);
                }
            } else {
                obj.fields[f] = Val::integer(std::stoi(v));
            }
        }
        // Unlisted fields default to null / 0.
        for (const auto& [f, kind] : prog.fields.kinds)
            if (!obj.fields.count(f))
                obj.fields[f] = kind == FieldKind::Rcu ? Val::null() : Val::integer(0);
        m.ms_.heap[names[n.name]] = std::move(obj);
    }
    m.ms_.root = 0;
    m.ms_.next_loc = next;

    // Tree check: every node reachable from the root by a unique path, no
    // node unreachable, no incoming edge to the root.
    std::map<Loc, int> indeg;
    for (const auto& [loc, obj] : m.ms_.heap)
        for (const auto& [f, v] : obj.fields)
            if (v.is_loc()) {
                if (v.num == m.ms_.root) return fail("heap seed has an edge into the root");
                indeg[v.num]++;
            }
    for (const auto& [loc, obj] : m.ms_.heap) {
        if (loc == m.ms_.root) continue;
        if (indeg[loc] != 1)
            return fail("heap seed is not a tree: node has " + std::to_string(indeg[loc]) +
                        " parents");
    }
    // Reachability from the root.
    std::set<Loc> seen{m.ms_.root};
    std::vector<Loc> work{m.ms_.root};
    while (!work.empty()) {
        Loc l = work.back();
        work.pop_back();
        for (const auto& [f, v] : m.ms_.heap[l].fields)
            if (v.is_loc() && seen.insert(v.num).second) work.push_back(v.num);
    }
    if (seen.size() != m.ms_.heap.size()) return fail("heap seed has unreachable nodes");

    m.threads_.resize(prog.threads.size());
    return m;
}

void Machine::advance(ThreadId tid) { jump(tid, threads_[tid].pc + 1); }

void Machine::jump(ThreadId tid, int target) {
    auto& ts = threads_[tid];
    ts.pc = target;
    const auto& code = prog_->threads[tid].code;
    // Unconditional jumps are lowering artifacts, not scheduled steps.
    while (ts.pc >= 0 && code[ts.pc].op == OpCode::Jump) ts.pc = code[ts.pc].target;
    if (ts.pc >= 0 && code[ts.pc].op == OpCode::Halt) ts.pc = -1;
}

bool Machine::all_done() const {
    for (const auto& t : threads_)
        if (!t.done()) return false;
    return true;
}

bool Machine::enabled(ThreadId tid) const {
    const auto& ts = threads_[tid];
    if (ts.done()) return false;
    const Instr& i = prog_->threads[tid].code[ts.pc];
    switch (i.op) {
        case OpCode::WriteBegin:
            return ms_.lock == kUnlocked && !ms_.readers.count(tid);
        case OpCode::WriteEnd:
            return ms_.lock == tid;
        case OpCode::ReadBegin:
            return ms_.lock != tid && !ms_.readers.count(tid);
        case OpCode::ReadEnd:
            return ms_.readers.count(tid) != 0;
        case OpCode::SyncStart:
        case OpCode::SyncStop:
        case OpCode::Free:
            return ms_.bounding.empty() && !ms_.readers.count(tid);
        default:
            return true;
    }
}

std::vector<ThreadId> Machine::enabled_threads() const {
    std::vector<ThreadId> out;
    for (ThreadId t = 0; t < static_cast<ThreadId>(threads_.size()); ++t)
        if (enabled(t)) out.push_back(t);
    return out;
}

std::optional<Val> Machine::read_var(ThreadId tid, const std::string& var, Fault* fault) const {
    auto it = ms_.stack.find({var, tid});
    if (it == ms_.stack.end()) {
        *fault = {Fault::Kind::UndefLocal, tid, "read of undefined local " + var};
        return std::nullopt;
    }
    if (it->second.kind == Val::Kind::Undef) {
        *fault = {Fault::Kind::UseAfterFree, tid, "local " + var + " holds undef"};
        return std::nullopt;
    }
    return it->second;
}

std::optional<Fault> Machine::step(ThreadId tid, StepInfo* info) {
    assert(enabled(tid));
    const Instr i = at(tid);
    auto& ts = threads_[tid];
    StepInfo local;
    StepInfo& si = info ? *info : local;
    si = {};
    si.tid = tid;
    si.op = i.op;

    Fault fault{Fault::Kind::UndefLocal, tid, ""};
    auto fail = [&](Fault f) -> std::optional<Fault> {
        ts.pc = -1;
        return f;
    };

    // Field access through a variable: resolves to a live heap object.
    auto deref = [&](const std::string& var, Loc* out) -> std::optional<Fault> {
        if (var == prog_->root_var) {
            *out = ms_.root;
            return std::nullopt;
        }
        auto v = read_var(tid, var, &fault);
        if (!v) return fault;
        if (v->kind == Val::Kind::Null)
            return Fault{Fault::Kind::NullDeref, tid, "null dereference through " + var};
        if (!v->is_loc())
            return Fault{Fault::Kind::UndefLocal, tid, var + " does not hold a reference"};
        auto it = ms_.heap.find(v->num);
        if (it == ms_.heap.end() || it->second.dead)
            return Fault{Fault::Kind::UseAfterFree, tid,
                         "access to freed node through " + var};
        *out = v->num;
        return std::nullopt;
    };

    auto field_value = [&](Loc l, const std::string& f, Val* out) -> std::optional<Fault> {
        const auto& obj = ms_.heap[l];
        auto it = obj.fields.find(f);
        Val v = it == obj.fields.end() ? Val::null() : it->second;
        if (v.kind == Val::Kind::Undef)
            return Fault{Fault::Kind::UseAfterFree, tid, "read of reclaimed field " + f};
        *out = v;
        return std::nullopt;
    };

    const bool writes_heap = i.op == OpCode::HeapWrite || i.op == OpCode::DataWrite ||
                             i.op == OpCode::Alloc || i.op == OpCode::Free;
    if (writes_heap && ts.phase == BlockPhase::InRead)
        return fail({Fault::Kind::WriteInReadBlock, tid, "mutation inside a read block"});

    switch (i.op) {
        case OpCode::WriteBegin:
            si.rule = "RCU-WBegin";
            ms_.lock = tid;
            ts.phase = BlockPhase::InWrite;
            advance(tid);
            return std::nullopt;
        case OpCode::WriteEnd: {
            si.rule = "RCU-WEnd";
            ms_.lock = kUnlocked;
            ts.phase = BlockPhase::Outside;
            // Locals may not point into the structure outside a block.
            std::erase_if(ms_.stack, [&](const auto& kv) { return kv.first.second == tid; });
            advance(tid);
            return std::nullopt;
        }
        case OpCode::ReadBegin:
            si.rule = "RCU-RBegin";
            ms_.readers.insert(tid);
            ts.phase = BlockPhase::InRead;
            advance(tid);
            return std::nullopt;
        case OpCode::ReadEnd: {
            si.rule = "RCU-REnd";
            ms_.readers.erase(tid);
            ms_.bounding.erase(tid);
            ts.phase = BlockPhase::Outside;
            std::erase_if(ms_.stack, [&](const auto& kv) { return kv.first.second == tid; });
            advance(tid);
            return std::nullopt;
        }
        case OpCode::SyncStart:
            si.rule = "RCU-SStart";
            ms_.bounding = ms_.readers;
            advance(tid);
            return std::nullopt;
        case OpCode::SyncStop:
            si.rule = "RCU-SStop";
            advance(tid);
            return std::nullopt;
        case OpCode::Free: {
            si.rule = "Free";
            auto v = read_var(tid, i.a, &fault);
            if (!v) return fail(fault);
            if (v->kind == Val::Kind::Null)
                return fail({Fault::Kind::NullDeref, tid, "free(null)"});
            if (!v->is_loc())
                return fail({Fault::Kind::UndefLocal, tid, i.a + " does not hold a reference"});
            if (v->num == ms_.root)
                return fail({Fault::Kind::RootOverwrite, tid, "free of the root"});
            auto it = ms_.heap.find(v->num);
            if (it == ms_.heap.end() || it->second.dead)
                return fail({Fault::Kind::DoubleFree, tid, "double free through " + i.a});
            it->second.dead = true;
            for (auto& [f, val] : it->second.fields) val = Val::undef();
            si.freed_loc = v->num;
            si.heap_changed = true;
            advance(tid);
            return std::nullopt;
        }
        case OpCode::Alloc: {
            si.rule = "HAlloc";
            auto it = ms_.stack.find({i.a, tid});
            if (it != ms_.stack.end() && it->second.is_loc() && it->second.num == ms_.root)
                return fail({Fault::Kind::RootOverwrite, tid, "allocation into a root alias"});
            Loc l = ms_.next_loc++;
            HeapObj obj;
            for (const auto& [f, kind] : prog_->fields.kinds)
                obj.fields[f] = kind == FieldKind::Rcu ? Val::null() : Val::integer(0);
            ms_.heap[l] = std::move(obj);
            ms_.stack[{i.a, tid}] = Val::loc(l);
            si.alloc_loc = l;
            si.assigned_var = {{i.a, tid}};
            si.heap_changed = true;
            advance(tid);
            return std::nullopt;
        }
        case OpCode::RootRead:
            si.rule = "SUpdt";
            ms_.stack[{i.a, tid}] = Val::loc(ms_.root);
            si.read_target = ms_.root;
            si.assigned_var = {{i.a, tid}};
            advance(tid);
            return std::nullopt;
        case OpCode::VarRead: {
            si.rule = "SUpdt";
            auto v = read_var(tid, i.a, &fault);
            if (!v) return fail(fault);
            ms_.stack[{i.b, tid}] = *v;
            if (v->is_loc()) si.read_target = v->num;
            si.assigned_var = {{i.b, tid}};
            advance(tid);
            return std::nullopt;
        }
        case OpCode::HeapRead:
        case OpCode::DataRead: {
            si.rule = "HRead";
            Loc l;
            if (auto f = deref(i.a, &l)) return fail(*f);
            Val v;
            if (auto f = field_value(l, i.field, &v)) return fail(*f);
            ms_.stack[{i.b, tid}] = v;
            if (i.op == OpCode::HeapRead && v.is_loc()) si.read_target = v.num;
            si.assigned_var = {{i.b, tid}};
            advance(tid);
            return std::nullopt;
        }
        case OpCode::HeapWrite: {
            si.rule = "HUpdt";
            Loc l;
            if (auto f = deref(i.a, &l)) return fail(*f);
            Val v = Val::null();
            if (!i.rhs_null) {
                auto rv = read_var(tid, i.b, &fault);
                if (!rv) return fail(fault);
                if (rv->kind == Val::Kind::Undef)
                    return fail({Fault::Kind::UseAfterFree, tid, "storing a dead reference"});
                v = *rv;
                if (v.is_loc() && v.num == ms_.root)
                    return fail({Fault::Kind::RootOverwrite, tid,
                                 "storing a reference to the root"});
            }
            ms_.heap[l].fields[i.field] = v;
            if (v.is_loc()) si.write_target = v.num;
            si.heap_changed = true;
            advance(tid);
            return std::nullopt;
        }
        case OpCode::DataWrite: {
            si.rule = "HUpdt";
            Loc l;
            if (auto f = deref(i.a, &l)) return fail(*f);
            auto rv = read_var(tid, i.b, &fault);
            if (!rv) return fail(fault);
            ms_.heap[l].fields[i.field] = *rv;
            si.heap_changed = true;
            advance(tid);
            return std::nullopt;
        }
        case OpCode::Skip:
            si.rule = "Skip";
            advance(tid);
            return std::nullopt;
        case OpCode::BranchBool: {
            si.rule = "Branch";
            auto v = read_var(tid, i.a, &fault);
            if (!v) return fail(fault);
            if (v->truthy())
                advance(tid);
            else
                jump(tid, i.target);
            return std::nullopt;
        }
        case OpCode::BranchFieldEq: {
            si.rule = "Branch";
            Loc l;
            if (auto f = deref(i.a, &l)) return fail(*f);
            Val fv;
            if (auto f = field_value(l, i.field, &fv)) return fail(*f);
            auto v = read_var(tid, i.b, &fault);
            if (!v) return fail(fault);
            if (fv == *v)
                advance(tid);
            else
                jump(tid, i.target);
            return std::nullopt;
        }
        case OpCode::BranchFieldNull: {
            si.rule = "Branch";
            Loc l;
            if (auto f = deref(i.a, &l)) return fail(*f);
            Val fv;
            if (auto f = field_value(l, i.field, &fv)) return fail(*f);
            if (fv.kind == Val::Kind::Null)
                advance(tid);
            else
                jump(tid, i.target);
            return std::nullopt;
        }
        case OpCode::LoopGuard: {
            si.rule = "Branch";
            Loc l;
            if (auto f = deref(i.a, &l)) return fail(*f);
            Val fv;
            if (auto f = field_value(l, i.field, &fv)) return fail(*f);
            bool keep_going = fv.kind != Val::Kind::Null;
            if (keep_going && !i.flag.empty()) {
                auto v = read_var(tid, i.flag, &fault);
                if (!v) return fail(fault);
                keep_going = v->truthy();
            }
            if (keep_going)
                advance(tid);
            else
                jump(tid, i.target);
            return std::nullopt;
        }
        case OpCode::Jump:
        case OpCode::Halt:
            assert(false && "jumps and halts are not scheduled");
            return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace rcuguard
