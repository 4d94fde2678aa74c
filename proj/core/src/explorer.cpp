#include "rcuguard/explorer.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

namespace rcuguard {

namespace {

// Canonical location numbering: root-first traversal over sorted fields,
// then remaining locations by allocation order.
std::map<Loc, int> canonical_locs(const MachineState& ms) {
    std::map<Loc, int> canon;
    int next = 0;
    std::vector<Loc> work{ms.root};
    if (ms.heap.count(ms.root)) canon[ms.root] = next++;
    while (!work.empty()) {
        Loc l = work.back();
        work.pop_back();
        auto it = ms.heap.find(l);
        if (it == ms.heap.end()) continue;
        for (const auto& [f, v] : it->second.fields) {
            if (v.is_loc() && !canon.count(v.num) && ms.heap.count(v.num)) {
                canon[v.num] = next++;
                work.push_back(v.num);
            }
        }
    }
    for (const auto& [l, obj] : ms.heap)
        if (!canon.count(l)) canon[l] = next++;
    return canon;
}

std::string val_str(const Val& v, const std::map<Loc, int>& locs) {
    switch (v.kind) {
        case Val::Kind::Loc: return "L" + std::to_string(locs.at(v.num));
        case Val::Kind::Null: return "null";
        case Val::Kind::Int: return "i" + std::to_string(v.num);
        case Val::Kind::Undef: return "undef";
    }
    return "?";
}

}  // namespace

std::string canonical_state(const Machine& m, const LogicalState& ls) {
    const MachineState& ms = m.state();
    auto locs = canonical_locs(ms);

    // Group replicated readers by code identity and sort each group by its
    // local signature; the writer keeps slot 0.
    int n = m.thread_count();
    std::vector<std::string> sig(n);
    for (ThreadId t = 0; t < n; ++t) {
        std::ostringstream s;
        const auto& ts = m.thread_states()[t];
        s << ts.pc << "/" << static_cast<int>(ts.phase);
        for (const auto& [key, v] : ms.stack)
            if (key.second == t) s << "," << key.first << "=" << val_str(v, locs);
        s << ";R" << ms.readers.count(t) << "B" << ms.bounding.count(t);
        for (const auto& [l, obs] : ls.obs)
            if (obs.count(Obs::iterator(t))) s << ",o" << locs.at(l);
        for (const auto& [l, tids] : ls.to_free)
            if (tids.count(t)) s << ",f" << locs.at(l);
        sig[t] = s.str();
    }
    std::map<int, std::vector<ThreadId>> groups;  // replicas of one declaration
    for (ThreadId t = 0; t < n; ++t) groups[m.program().threads[t].group].push_back(t);
    std::vector<ThreadId> canon_order;
    for (auto& [g, members] : groups) {
        std::sort(members.begin(), members.end(),
                  [&](ThreadId a, ThreadId b) { return sig[a] < sig[b]; });
        canon_order.insert(canon_order.end(), members.begin(), members.end());
    }
    std::vector<int> canon_tid(n);
    for (int i = 0; i < n; ++i) canon_tid[canon_order[i]] = i;

    std::ostringstream out;
    out << "lock=" << (ms.lock == kUnlocked ? -1 : canon_tid[ms.lock]);
    out << ";heap=";
    std::vector<std::pair<int, Loc>> hk;
    for (const auto& [l, obj] : ms.heap) hk.emplace_back(locs.at(l), l);
    std::sort(hk.begin(), hk.end());
    for (const auto& [cl, l] : hk) {
        const auto& obj = ms.heap.at(l);
        out << "[" << cl << (obj.dead ? "*" : "");
        for (const auto& [f, v] : obj.fields) out << " " << f << "=" << val_str(v, locs);
        out << "]";
    }
    out << ";threads=";
    for (ThreadId t : canon_order) out << "{" << sig[t] << "}";
    out << ";O=";
    for (const auto& [cl, l] : hk) {
        auto it = ls.obs.find(l);
        if (it == ls.obs.end()) continue;
        out << "[" << cl;
        for (const auto& o : it->second) {
            if (o.kind == Obs::Kind::Iterator)
                out << " it" << canon_tid[o.tid];
            else
                out << " " << to_string(o);
        }
        out << "]";
    }
    out << ";F=";
    for (const auto& [cl, l] : hk) {
        auto it = ls.to_free.find(l);
        if (it == ls.to_free.end()) continue;
        out << "[" << cl;
        std::vector<int> ct;
        for (ThreadId t : it->second) ct.push_back(canon_tid[t]);
        std::sort(ct.begin(), ct.end());
        for (int t : ct) out << " " << t;
        out << "]";
    }
    out << ";U=";
    for (ThreadId t : canon_order) {
        out << "{";
        for (const auto& [var, ut] : ls.undef_vars)
            if (ut == t) out << var << ",";
        out << "}";
    }
    return out.str();
}

std::string state_hash(const Machine& m, const LogicalState& ls) {
    auto h = std::hash<std::string>{}(canonical_state(m, ls));
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

// ---------------------------------------------------------------------------

namespace {

struct SearchNode {
    Machine machine;
    LogicalState logical;
    std::vector<ThreadId> schedule;
};

}  // namespace

ExploreReport explore(const CompiledProgram& prog, const HeapSeed& seed,
                      const ExploreBounds& bounds, const ExploreOptions& opts) {
    ExploreReport report;
    std::string err;
    auto m0 = Machine::init(prog, seed, &err);
    if (!m0) {
        report.exhausted = false;
        report.violations.push_back({"error", err, {}, 0});
        return report;
    }
    SearchNode root{*m0, logical_init(prog, m0->state()), {}};

    std::vector<SearchNode> stack;
    stack.push_back(std::move(root));
    std::unordered_map<std::string, int> visited;  // canonical form -> min depth
    if (bounds.dedup)
        visited[canonical_state(stack.back().machine, stack.back().logical)] = 0;

    auto note_violation = [&](const std::string& reason, const std::string& detail,
                              const std::vector<ThreadId>& sched) {
        ++report.reason_counts[reason];
        for (const auto& v : report.violations)
            if (v.reason == reason) return;
        report.violations.push_back({reason, detail, sched, static_cast<int>(sched.size())});
    };

    while (!stack.empty()) {
        SearchNode node = std::move(stack.back());
        stack.pop_back();
        ++report.states_explored;

        if (node.machine.all_done()) {
            ++report.schedules_completed;
            continue;
        }
        auto enabled = node.machine.enabled_threads();
        if (enabled.empty()) {
            // All threads blocked; counts as a completed (stuck) schedule.
            ++report.schedules_completed;
            continue;
        }
        if (static_cast<int>(node.schedule.size()) >= bounds.max_steps) {
            report.exhausted = false;
            continue;
        }

        for (auto it = enabled.rbegin(); it != enabled.rend(); ++it) {
            ThreadId tid = *it;
            SearchNode child = node;
            StepInfo si;
            auto fault = child.machine.step(tid, &si);
            child.schedule.push_back(tid);
            if (fault) {
                note_violation("fault:" + to_string(fault->kind), fault->detail,
                               child.schedule);
                ++report.schedules_completed;
                continue;
            }
            child.logical =
                advance(node.logical, node.machine.state(), si, child.machine.state());

            if (static_cast<int>(child.machine.state().heap.size()) > bounds.max_heap_nodes) {
                report.exhausted = false;
                continue;
            }

            // Violated states are recorded but still explored: a later step
            // may surface the machine fault the axiom anticipated.
            int depth = static_cast<int>(child.schedule.size());
            if (opts.check_axioms_every > 0 && depth % opts.check_axioms_every == 0) {
                auto violations = check_axioms(child.logical, child.machine.state());
                for (const auto& v : violations)
                    note_violation("axiom:" + v.axiom, v.witness, child.schedule);
            }
            if (opts.track_lifecycle) {
                for (Loc l : lifecycle_violations(child.logical))
                    note_violation("lifecycle", "location " + std::to_string(l),
                                   child.schedule);
            }

            if (bounds.dedup) {
                auto key = canonical_state(child.machine, child.logical);
                auto [pos, inserted] = visited.try_emplace(key, depth);
                if (!inserted && pos->second <= depth) {
                    ++report.dedup_hits;
                    continue;
                }
                pos->second = depth;
            }
            stack.push_back(std::move(child));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

ReplayResult replay(const CompiledProgram& prog, const HeapSeed& seed,
                    const std::vector<ThreadId>& schedule, const ExploreOptions& opts) {
    ReplayResult result;
    std::string err;
    auto m = Machine::init(prog, seed, &err);
    if (!m) {
        result.error = err;
        result.verdict.safe = false;
        result.verdict.reasons.push_back("error");
        return result;
    }
    LogicalState ls = logical_init(prog, m->state());
    int step_no = 0;
    for (ThreadId tid : schedule) {
        ++step_no;
        if (tid < 0 || tid >= m->thread_count() || !m->enabled(tid)) {
            result.divergence = step_no;
            result.error = "schedule step " + std::to_string(step_no) + ": thread " +
                           std::to_string(tid) + " is not enabled";
            break;
        }
        MachineState pre = m->state();
        StepInfo si;
        auto fault = m->step(tid, &si);
        if (fault) {
            result.trace.push_back({step_no, tid, si.rule, state_hash(*m, ls)});
            result.faults.push_back(*fault);
            break;
        }
        ls = advance(ls, pre, si, m->state());
        result.trace.push_back({step_no, tid, si.rule, state_hash(*m, ls)});
        // Violations accumulate; the replay runs the schedule to its end so
        // the verdict matches what exploration recorded for it.
        if (opts.check_axioms_every > 0 && step_no % opts.check_axioms_every == 0) {
            for (const auto& v : check_axioms(ls, m->state())) {
                bool seen = false;
                for (const auto& w : result.violations)
                    if (w.axiom == v.axiom) seen = true;
                if (!seen) result.violations.push_back(v);
            }
        }
        if (opts.track_lifecycle && !lifecycle_violations(ls).empty()) {
            bool seen = false;
            for (const auto& w : result.violations)
                if (w.axiom == "lifecycle") seen = true;
            if (!seen) result.violations.push_back({"lifecycle", "observation order violated"});
        }
    }
    result.verdict = safety_verdict(result.faults, result.violations);
    result.final_state = m->state();
    return result;
}

}  // namespace rcuguard
