#include "rcuguard/oracle.hpp"

#include <algorithm>

namespace rcuguard {

std::string to_string(const Obs& o) {
    switch (o.kind) {
        case Obs::Kind::Iterator: return "iterator " + std::to_string(o.tid);
        case Obs::Kind::Unlinked: return "unlinked";
        case Obs::Kind::Fresh: return "fresh";
        case Obs::Kind::Freeable: return "freeable";
        case Obs::Kind::Root: return "root";
    }
    return "?";
}

namespace {

bool has(const std::set<Obs>& s, Obs::Kind k) {
    for (const auto& o : s)
        if (o.kind == k) return true;
    return false;
}

bool has_iterator(const std::set<Obs>& s, ThreadId tid) {
    return s.count(Obs::iterator(tid)) != 0;
}

// Locations reachable from the root over live objects.
std::set<Loc> root_reachable(const MachineState& ms) {
    std::set<Loc> seen;
    auto it = ms.heap.find(ms.root);
    if (it == ms.heap.end() || it->second.dead) return seen;
    seen.insert(ms.root);
    std::vector<Loc> work{ms.root};
    while (!work.empty()) {
        Loc l = work.back();
        work.pop_back();
        auto hit = ms.heap.find(l);
        if (hit == ms.heap.end() || hit->second.dead) continue;
        for (const auto& [f, v] : hit->second.fields)
            if (v.is_loc() && !ms.heap.at(v.num).dead && seen.insert(v.num).second)
                work.push_back(v.num);
    }
    return seen;
}

void note_stage(LogicalState& ls, Loc l, LifeStage st) {
    auto& h = ls.history[l];
    if (!h.empty() && h.back() == st) return;
    h.push_back(st);
}

}  // namespace

LogicalState logical_init(const CompiledProgram& prog, const MachineState& ms) {
    LogicalState ls;
    ls.obs[ms.root].insert(Obs::root());
    for (const auto& t : prog.threads) {
        ls.threads.insert(t.tid);
        std::set<std::string> vars;
        for (const auto& i : t.code) {
            for (const auto* v : {&i.a, &i.b, &i.flag})
                if (!v->empty() && *v != prog.root_var) vars.insert(*v);
        }
        for (const auto& v : vars) ls.undef_vars.insert({v, t.tid});
    }
    return ls;
}

LogicalState advance(const LogicalState& ls0, const MachineState& pre, const StepInfo& info,
                     const MachineState& post) {
    LogicalState ls = ls0;
    const ThreadId tid = info.tid;

    if (info.assigned_var) ls.undef_vars.erase(*info.assigned_var);

    // Stack acquisition of a location: an iterator observation, unless the
    // writer holds it in a non-linked stage. A dangling value read out of a
    // field is not an observation; the holder trips RWOW instead.
    if (info.read_target && post.heap.count(*info.read_target) &&
        !post.heap.at(*info.read_target).dead) {
        Loc l = *info.read_target;
        auto& obs = ls.obs[l];
        bool writer_special = pre.lock == tid &&
                              (has(obs, Obs::Kind::Fresh) || has(obs, Obs::Kind::Unlinked) ||
                               has(obs, Obs::Kind::Freeable));
        if (!writer_special) {
            obs.insert(Obs::iterator(tid));
            // Acquiring a retired node (a reader still allowed to see it)
            // is not a stage transition.
            if (!has(obs, Obs::Kind::Unlinked) && !has(obs, Obs::Kind::Freeable))
                note_stage(ls, l, LifeStage::Iterator);
        }
    }

    switch (info.op) {
        case OpCode::Alloc: {
            Loc l = *info.alloc_loc;
            ls.obs[l].insert(Obs::fresh());
            note_stage(ls, l, LifeStage::Fresh);
            break;
        }
        case OpCode::HeapWrite: {
            // Publishing a fresh node: fresh flips to the writer's iterator.
            if (info.write_target) {
                auto& obs = ls.obs[*info.write_target];
                if (has(obs, Obs::Kind::Fresh)) {
                    std::erase_if(obs, [](const Obs& o) { return o.kind == Obs::Kind::Fresh; });
                    obs.insert(Obs::iterator(tid));
                    note_stage(ls, *info.write_target, LifeStage::Iterator);
                }
            }
            break;
        }
        case OpCode::ReadEnd: {
            // The reader's observations and free-list entries expire.
            for (auto& [l, obs] : ls.obs)
                std::erase_if(obs, [&](const Obs& o) {
                    return o.kind == Obs::Kind::Iterator && o.tid == tid;
                });
            for (auto& [l, tids] : ls.to_free) tids.erase(tid);
            for (const auto& [key, val] : pre.stack)
                if (key.second == tid) ls.undef_vars.insert(key);
            break;
        }
        case OpCode::WriteEnd: {
            for (auto& [l, obs] : ls.obs)
                std::erase_if(obs, [&](const Obs& o) {
                    return o.kind == Obs::Kind::Iterator && o.tid == tid;
                });
            for (const auto& [key, val] : pre.stack)
                if (key.second == tid) ls.undef_vars.insert(key);
            break;
        }
        case OpCode::SyncStart: {
            // The grace period covers every node unlinked so far: its
            // potential holders are the readers active right now.
            for (auto& [l, obs] : ls.obs)
                if (has(obs, Obs::Kind::Unlinked) && !ls.to_free.count(l))
                    ls.to_free[l] = post.readers;
            break;
        }
        case OpCode::SyncStop: {
            // B empty implies the snapshot readers are gone; covered
            // unlinked nodes become freeable.
            for (auto& [l, obs] : ls.obs) {
                auto it = ls.to_free.find(l);
                if (it == ls.to_free.end() || !it->second.empty()) continue;
                if (has(obs, Obs::Kind::Unlinked)) {
                    std::erase_if(obs,
                                  [](const Obs& o) { return o.kind == Obs::Kind::Unlinked; });
                    obs.insert(Obs::freeable());
                    note_stage(ls, l, LifeStage::Freeable);
                }
            }
            break;
        }
        case OpCode::Free: {
            Loc l = *info.freed_loc;
            ls.obs.erase(l);
            ls.to_free.erase(l);
            note_stage(ls, l, LifeStage::Undef);
            break;
        }
        default:
            break;
    }

    if (info.op == OpCode::Free) {
        // Every local of the freeing thread naming the dead object becomes
        // undefined; the type system's x:undef after T-Free.
        for (const auto& [key, val] : post.stack)
            if (key.second == tid && val.is_loc() && val.num == *info.freed_loc)
                ls.undef_vars.insert(key);
    }

    // Reachability diff: nodes that lost their last root path are unlinked.
    if (info.heap_changed) {
        auto before = root_reachable(pre);
        auto after = root_reachable(post);
        for (Loc l : before) {
            if (after.count(l)) continue;
            auto hit = post.heap.find(l);
            if (hit == post.heap.end() || hit->second.dead) continue;
            auto& obs = ls.obs[l];
            if (!has(obs, Obs::Kind::Unlinked) && !has(obs, Obs::Kind::Freeable)) {
                obs.insert(Obs::unlinked());
                note_stage(ls, l, LifeStage::Unlinked);
            }
            // The writer no longer views it as part of the structure.
            if (post.lock != kUnlocked)
                std::erase_if(obs, [&](const Obs& o) {
                    return o.kind == Obs::Kind::Iterator && o.tid == post.lock;
                });
        }
    }

    return ls;
}

// ---------------------------------------------------------------------------
// Memory axioms

std::vector<Violation> check_axioms(const LogicalState& ls, const MachineState& ms) {
    std::vector<Violation> out;
    auto violate = [&](const std::string& axiom, const std::string& witness) {
        out.push_back({axiom, witness});
    };
    auto obs_of = [&](Loc l) -> const std::set<Obs>& {
        static const std::set<Obs> empty;
        auto it = ls.obs.find(l);
        return it == ls.obs.end() ? empty : it->second;
    };
    auto live = [&](Loc l) {
        auto it = ms.heap.find(l);
        return it != ms.heap.end() && !it->second.dead;
    };
    auto off_structure = [&](Loc l) {
        const auto& o = obs_of(l);
        return has(o, Obs::Kind::Unlinked) || has(o, Obs::Kind::Freeable) ||
               has(o, Obs::Kind::Fresh);
    };

    // OW: two distinct live rcu cells never point at the same node unless an
    // endpoint is off the structure.
    {
        std::map<Loc, std::pair<Loc, std::string>> owner;
        for (const auto& [l, obj] : ms.heap) {
            if (obj.dead) continue;
            for (const auto& [f, v] : obj.fields) {
                if (!v.is_loc()) continue;
                auto [it, fresh_insert] = owner.try_emplace(v.num, l, f);
                if (fresh_insert) continue;
                if (!(off_structure(l) || off_structure(it->second.first) ||
                      off_structure(v.num)))
                    violate("OW", "node " + std::to_string(v.num) + " has parents " +
                                      std::to_string(it->second.first) + " and " +
                                      std::to_string(l));
            }
        }
    }

    // RWOW: every live stack reference is observed by its holder.
    for (const auto& [key, v] : ms.stack) {
        if (!v.is_loc() || ls.undef_vars.count(key)) continue;
        Loc l = v.num;
        const auto& [var, tid] = key;
        const auto& o = obs_of(l);
        bool ok = has_iterator(o, tid) ||
                  (ms.lock == tid && (has(o, Obs::Kind::Unlinked) ||
                                      has(o, Obs::Kind::Freeable) || has(o, Obs::Kind::Fresh)));
        if (!ok)
            violate("RWOW", var + "@" + std::to_string(tid) + " holds unobserved node " +
                                std::to_string(l));
    }

    // AWRT: stack aliases of the root are iterator observations.
    for (const auto& [key, v] : ms.stack) {
        if (!v.is_loc() || v.num != ms.root || ls.undef_vars.count(key)) continue;
        if (!has_iterator(obs_of(ms.root), key.second))
            violate("AWRT", key.first + "@" + std::to_string(key.second));
    }

    // IFL: an iterator on a free-listed node belongs to the entry's readers.
    for (const auto& [l, tids] : ls.to_free) {
        for (const auto& o : obs_of(l)) {
            if (o.kind != Obs::Kind::Iterator) continue;
            if (o.tid == ms.lock) continue;  // the writer is not waited on
            if (!tids.count(o.tid))
                violate("IFL", "reader " + std::to_string(o.tid) + " on " + std::to_string(l) +
                                   " missing from its free-list entry");
        }
    }

    // RINFL: free-list entries wait only on bounded readers.
    for (const auto& [l, tids] : ls.to_free)
        for (ThreadId t : tids)
            if (!ms.bounding.count(t))
                violate("RINFL", "free list waits on " + std::to_string(t) +
                                     " which is not in the bounding set");

    // ULKR: predecessors of an unlinked node are unlinked or freeable.
    for (const auto& [l, o] : ls.obs) {
        if (!has(o, Obs::Kind::Unlinked)) continue;
        for (const auto& [p, obj] : ms.heap) {
            if (obj.dead) continue;
            for (const auto& [f, v] : obj.fields) {
                if (!v.is_loc() || v.num != l) continue;
                const auto& po = obs_of(p);
                if (!has(po, Obs::Kind::Unlinked) && !has(po, Obs::Kind::Freeable))
                    violate("ULKR", "live node " + std::to_string(p) +
                                        " still points at unlinked " + std::to_string(l));
            }
        }
    }

    // FLR: the free list is closed under heap predecessors, with waiters
    // nested accordingly.
    for (const auto& [l, tids] : ls.to_free) {
        for (const auto& [p, obj] : ms.heap) {
            if (obj.dead || p == l) continue;
            for (const auto& [f, v] : obj.fields) {
                if (!v.is_loc() || v.num != l) continue;
                auto it = ls.to_free.find(p);
                if (it == ls.to_free.end())
                    violate("FLR", "predecessor " + std::to_string(p) +
                                       " of free-listed " + std::to_string(l) +
                                       " is not free-listed");
                else if (!std::includes(tids.begin(), tids.end(), it->second.begin(),
                                        it->second.end()))
                    violate("FLR", "waiter sets not nested for " + std::to_string(p));
            }
        }
    }

    // WULK: the writer's iterator observations are on linked nodes only.
    if (ms.lock != kUnlocked) {
        for (const auto& [l, o] : ls.obs) {
            if (!has_iterator(o, ms.lock)) continue;
            if (has(o, Obs::Kind::Unlinked) || has(o, Obs::Kind::Freeable) || !live(l))
                violate("WULK", "writer iterator on off-structure node " + std::to_string(l));
        }
    }

    // FR: fresh nodes have no heap predecessors and a single owner's refs.
    for (const auto& [l, o] : ls.obs) {
        if (!has(o, Obs::Kind::Fresh)) continue;
        for (const auto& [p, obj] : ms.heap) {
            if (obj.dead) continue;
            for (const auto& [f, v] : obj.fields)
                if (v.is_loc() && v.num == l)
                    violate("FR", "fresh node " + std::to_string(l) + " reachable from " +
                                      std::to_string(p));
        }
        std::set<ThreadId> holders;
        for (const auto& [key, v] : ms.stack)
            if (v.is_loc() && v.num == l && !ls.undef_vars.count(key))
                holders.insert(key.second);
        if (holders.size() > 1)
            violate("FR", "fresh node " + std::to_string(l) + " held by multiple threads");
        // WF: only the writer holds fresh nodes.
        for (ThreadId t : holders)
            if (t != ms.lock)
                violate("WF", "fresh node " + std::to_string(l) + " held by non-writer " +
                                  std::to_string(t));
        // FNR: fresh excludes iterator and unlinked observations.
        if (has(o, Obs::Kind::Unlinked) ||
            std::any_of(o.begin(), o.end(),
                        [](const Obs& x) { return x.kind == Obs::Kind::Iterator; }))
            violate("FNR", "fresh node " + std::to_string(l) + " also observed otherwise");
        // FPI: non-null fresh fields point at iterator-observed nodes.
        auto hit = ms.heap.find(l);
        if (hit != ms.heap.end()) {
            for (const auto& [f, v] : hit->second.fields) {
                if (!v.is_loc()) continue;
                const auto& to = obs_of(v.num);
                bool any_itr = std::any_of(to.begin(), to.end(), [](const Obs& x) {
                    return x.kind == Obs::Kind::Iterator;
                });
                if (!any_itr)
                    violate("FPI", "fresh field " + f + " points at non-iterator node " +
                                       std::to_string(v.num));
            }
        }
    }

    // WNR: the lock holder is not an active reader.
    if (ms.lock != kUnlocked && ms.readers.count(ms.lock))
        violate("WNR", "thread " + std::to_string(ms.lock));

    // RITR: readers make iterator observations only; their live stack refs
    // inside a read section must be iterator-observed.
    for (ThreadId t : ms.readers) {
        for (const auto& [key, v] : ms.stack) {
            if (key.second != t || !v.is_loc() || ls.undef_vars.count(key)) continue;
            if (!has_iterator(obs_of(v.num), t))
                violate("RITR", key.first + "@" + std::to_string(t));
        }
    }

    // HD: heap closure.
    for (const auto& [l, obj] : ms.heap)
        for (const auto& [f, v] : obj.fields)
            if (v.is_loc() && !ms.heap.count(v.num))
                violate("HD", "dangling heap value " + std::to_string(v.num));

    // UNQRT: the root has no incoming edges.
    for (const auto& [l, obj] : ms.heap) {
        if (obj.dead) continue;
        for (const auto& [f, v] : obj.fields)
            if (v.is_loc() && v.num == ms.root)
                violate("UNQRT", "edge into the root from " + std::to_string(l));
    }

    // UNQR: every root-reachable node is reached by a unique path.
    {
        std::map<Loc, int> indeg;
        auto reach = root_reachable(ms);
        for (Loc l : reach) {
            for (const auto& [f, v] : ms.heap.at(l).fields)
                if (v.is_loc() && reach.count(v.num) && !ms.heap.at(v.num).dead) indeg[v.num]++;
        }
        for (const auto& [l, d] : indeg)
            if (d > 1 || (l == ms.root && d > 0))
                violate("UNQR", "node " + std::to_string(l) + " reachable along " +
                                    std::to_string(d) + " paths");
    }

    return out;
}

std::vector<Loc> lifecycle_violations(const LogicalState& ls) {
    std::vector<Loc> bad;
    for (const auto& [l, h] : ls.history) {
        int prev = -1;
        for (auto st : h) {
            int v = static_cast<int>(st);
            if (v <= prev && !(v == prev && st == LifeStage::Iterator)) {
                bad.push_back(l);
                break;
            }
            prev = v;
        }
    }
    return bad;
}

Verdict safety_verdict(const std::vector<Fault>& faults,
                       const std::vector<Violation>& violations) {
    Verdict v;
    for (const auto& f : faults) {
        v.safe = false;
        v.reasons.push_back("fault:" + to_string(f.kind));
    }
    for (const auto& viol : violations) {
        v.safe = false;
        v.reasons.push_back(viol.axiom == "lifecycle" ? viol.axiom : "axiom:" + viol.axiom);
    }
    std::sort(v.reasons.begin(), v.reasons.end());
    v.reasons.erase(std::unique(v.reasons.begin(), v.reasons.end()), v.reasons.end());
    return v;
}

}  // namespace rcuguard
