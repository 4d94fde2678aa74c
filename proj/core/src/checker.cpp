#include "rcuguard/checker.hpp"

#include <algorithm>
#include <cassert>

namespace rcuguard {

namespace {

bool overwritable(const RcuType& t) {
    return !t.linear() && t.kind != RcuType::Kind::RcuRoot;
}

// Variables targeted by field maps anywhere in env, excluding the listed
// bindings themselves.
bool targeted_in(const TypeEnv& env, const std::string& var,
                 const std::set<std::string>& excluding) {
    for (const auto& [v, t] : env.bindings) {
        if (excluding.count(v)) continue;
        if (t.fmap.var_targets().count(var)) return true;
    }
    return false;
}

// Could `deep` concretize to a proper extension of some concretization of
// `base`? Used for the descendant framing premises (forall rho4 != eps,
// not MayAlias(deep, base.rho4)). Conservative: true unless provably
// impossible.
bool may_extend(const Path& deep, const Path& base, unsigned bound) {
    std::set<std::string> vars = deep.index_vars();
    auto bv = base.index_vars();
    vars.insert(bv.begin(), bv.end());
    std::vector<std::string> vlist(vars.begin(), vars.end());

    unsigned depth = 1;
    for (const Path* p : {&deep, &base}) {
        unsigned d = 1;
        for (const auto& s : p->segs) d += (s.kind == PathSeg::Kind::Rep) ? bound : 1;
        depth = std::max(depth, d);
    }

    std::vector<unsigned> vals(vlist.size(), 0);
    while (true) {
        std::map<std::string, unsigned> asg;
        for (size_t i = 0; i < vlist.size(); ++i) asg[vlist[i]] = vals[i];
        auto cd = concretize(deep, asg, depth);
        auto cb = concretize(base, asg, depth);
        for (const auto& b : cb.sequences) {
            for (const auto& d : cd.sequences) {
                if (d.size() > b.size() && std::equal(b.begin(), b.end(), d.begin()))
                    return true;
            }
        }
        size_t i = 0;
        for (; i < vals.size(); ++i) {
            if (vals[i] < bound) {
                ++vals[i];
                std::fill(vals.begin(), vals.begin() + i, 0u);
                break;
            }
        }
        if (i == vals.size()) break;
        if (vals.empty()) break;
    }

    // Beyond the bound: impossible only if len(deep) >= len(base)+1 has no
    // solution over the naturals.
    long cd = 0, cb = 0;
    std::set<std::string> vd, vb;
    for (const auto& s : deep.segs)
        s.kind == PathSeg::Kind::Rep ? (void)vd.insert(s.index) : (void)++cd;
    for (const auto& s : base.segs)
        s.kind == PathSeg::Kind::Rep ? (void)vb.insert(s.index) : (void)++cb;
    std::set<std::string> only_d;
    std::set_difference(vd.begin(), vd.end(), vb.begin(), vb.end(),
                        std::inserter(only_d, only_d.begin()));
    if (!only_d.empty()) return true;
    return cd - cb >= 1;
}

struct FramingQuery {
    std::vector<Path> forbidden_aliases;   // not MayAlias(rho3, ...)
    std::set<std::string> forbidden_targets;  // field-map targets m with m notin {...}
    std::optional<Path> no_descendants_of;  // not MayAlias(rho3, base.rho4)
};

// The framing premises quantify over the field-map entries of the other
// rcuItr bindings: a binding with an empty field map is not matched by the
// rule pattern N3([f -> m]).
std::optional<std::string> framing_violation(const TypeEnv& env,
                                             const std::set<std::string>& exclude,
                                             const FramingQuery& q, unsigned bound) {
    for (const auto& [var, t] : env.bindings) {
        if (exclude.count(var)) continue;
        if (t.kind != RcuType::Kind::RcuItr || t.fmap.empty()) continue;
        for (const auto& p : q.forbidden_aliases)
            if (may_alias(t.path, p, bound))
                return var + " may alias " + to_string(p);
        for (const auto& m : t.fmap.var_targets())
            if (q.forbidden_targets.count(m))
                return var + " holds a field-map alias of " + m;
        if (q.no_descendants_of && may_extend(t.path, *q.no_descendants_of, bound))
            return var + " may be a tracked descendant of " + to_string(*q.no_descendants_of);
    }
    return std::nullopt;
}

}  // namespace

Diagnostic Checker::diag(const std::string& rule, const Stmt& at, std::string msg,
                         const TypeEnv& env) const {
    return Diagnostic{rule, at.span, std::move(msg), env};
}

void Checker::record(const Stmt& at, const std::string& rule) {
    trace_.push_back({at.span, rule});
}

// ---------------------------------------------------------------------------
// Atomic statements

StmtResult Checker::check_atomic(const TypeEnv& env, const Stmt& s, CheckMode mode) {
    const bool write = (mode == CheckMode::Write);
    switch (s.kind) {
        case StmtKind::Skip:
            record(s, "T-Skip");
            return StmtResult::of(env);

        case StmtKind::RootRead: {
            const auto& r = env.get(s.var_b);
            if (r.kind != RcuType::Kind::RcuRoot)
                return StmtResult::error(diag("T-Root", s, s.var_b + " is not rcuRoot", env));
            const auto& y = env.get(s.var_a);
            if (y.kind != RcuType::Kind::Undef)
                return StmtResult::error(diag(
                    "T-Root", s, s.var_a + " must be undef before a root read", env));
            if (targeted_in(env, s.var_a, {s.var_a}))
                return StmtResult::error(diag(
                    "T-Root", s, s.var_a + " occurs free in the context", env));
            TypeEnv out = env;
            out.set(s.var_a, write ? RcuType::itr({}, {}) : RcuType::itr_bare());
            record(s, "T-Root");
            return StmtResult::of(out);
        }

        case StmtKind::VarRead: {
            const auto& x = env.get(s.var_a);
            const auto& z = env.get(s.var_b);
            if (!write) {
                if (x.kind != RcuType::Kind::RcuItrBare && x.kind != RcuType::Kind::RcuItr)
                    return StmtResult::error(diag("T-ReadS", s, s.var_a + " is not rcuItr", env));
                TypeEnv out = env;
                out.set(s.var_b, RcuType::itr_bare());
                record(s, "T-ReadS");
                return StmtResult::of(out);
            }
            if (x.kind != RcuType::Kind::RcuItr)
                return StmtResult::error(diag("T-ReadS", s, s.var_a + " is not rcuItr", env));
            if (!overwritable(z))
                return StmtResult::error(diag(
                    "T-ReadS", s, "overwriting " + s.var_b + ": " + to_string(z), env));
            if (s.var_a == s.var_b)
                return StmtResult::error(diag("T-ReadS", s, "self assignment", env));
            if (targeted_in(env, s.var_b, {s.var_a, s.var_b}))
                return StmtResult::error(diag(
                    "T-ReadS", s, s.var_b + " occurs free in the context", env));
            TypeEnv out = env;
            out.set(s.var_b, x);
            record(s, "T-ReadS");
            return StmtResult::of(out);
        }

        case StmtKind::FieldRead: {
            const auto& x = env.get(s.var_a);
            const auto& z = env.get(s.var_b);
            if (!write) {
                if (x.kind != RcuType::Kind::RcuItrBare && x.kind != RcuType::Kind::RcuItr)
                    return StmtResult::error(diag("T-ReadH", s, s.var_a + " is not rcuItr", env));
                TypeEnv out = env;
                out.set(s.var_b, RcuType::itr_bare());
                record(s, "T-ReadH");
                return StmtResult::of(out);
            }
            if (x.kind != RcuType::Kind::RcuItr)
                return StmtResult::error(diag("T-ReadH", s, s.var_a + " is not rcuItr", env));
            if (s.var_a == s.var_b)
                return StmtResult::error(diag("T-ReadH", s, "self field read", env));
            if (!overwritable(z))
                return StmtResult::error(diag(
                    "T-ReadH", s, "overwriting " + s.var_b + ": " + to_string(z), env));
            if (targeted_in(env, s.var_b, {s.var_a, s.var_b}))
                return StmtResult::error(diag(
                    "T-ReadH", s, s.var_b + " occurs free in the context", env));
            TypeEnv out = env;
            RcuType xt = x;
            xt.fmap.erase_containing(s.field);
            xt.fmap.set({s.field}, FieldTarget::of(s.var_b));
            out.set(s.var_a, std::move(xt));
            out.set(s.var_b, RcuType::itr(x.path.append(PathSeg::concrete(s.field)), {}));
            record(s, "T-ReadH");
            return StmtResult::of(out);
        }

        case StmtKind::DataRead: {
            const auto& x = env.get(s.var_a);
            bool readable = x.kind == RcuType::Kind::RcuItr ||
                            x.kind == RcuType::Kind::RcuItrBare ||
                            (write && x.kind == RcuType::Kind::RcuFresh);
            if (!readable)
                return StmtResult::error(diag(
                    "artifact", s, "data read through " + s.var_a + ": " + to_string(x), env));
            const auto& v = env.get(s.var_b);
            if (!overwritable(v))
                return StmtResult::error(diag(
                    "artifact", s, "overwriting " + s.var_b + ": " + to_string(v), env));
            if (targeted_in(env, s.var_b, {s.var_b}))
                return StmtResult::error(diag(
                    "artifact", s, s.var_b + " occurs free in the context", env));
            TypeEnv out = env;
            out.set(s.var_b, RcuType::boolean());
            record(s, "artifact");
            return StmtResult::of(out);
        }

        case StmtKind::DataWrite: {
            if (!write)
                return StmtResult::error(diag(
                    "ToRCURead", s, "heap mutation in read-side critical section", env));
            const auto& x = env.get(s.var_a);
            if (x.kind != RcuType::Kind::RcuFresh)
                return StmtResult::error(diag(
                    "artifact", s,
                    "data writes are allowed only into fresh nodes, " + s.var_a + ": " +
                        to_string(x),
                    env));
            if (env.get(s.var_b).kind != RcuType::Kind::Bool)
                return StmtResult::error(diag(
                    "artifact", s, s.var_b + " is not a defined data value", env));
            record(s, "artifact");
            return StmtResult::of(env);
        }

        case StmtKind::Alloc: {
            if (!write)
                return StmtResult::error(diag(
                    "ToRCURead", s, "allocation in read-side critical section", env));
            const auto& x = env.get(s.var_a);
            if (x.kind != RcuType::Kind::Undef)
                return StmtResult::error(diag(
                    "T-Alloc", s, s.var_a + " must be undef before allocation", env));
            if (targeted_in(env, s.var_a, {s.var_a}))
                return StmtResult::error(diag(
                    "T-Alloc", s, s.var_a + " occurs free in the context", env));
            TypeEnv out = env;
            out.set(s.var_a, RcuType::fresh({}));
            record(s, "T-Alloc");
            return StmtResult::of(out);
        }

        case StmtKind::FreeStmt: {
            if (!write)
                return StmtResult::error(diag(
                    "ToRCURead", s, "free in read-side critical section", env));
            const auto& x = env.get(s.var_a);
            if (x.kind != RcuType::Kind::Freeable)
                return StmtResult::error(diag(
                    "T-Free", s, s.var_a + " is not freeable: " + to_string(x), env));
            TypeEnv out = env;
            out.set(s.var_a, RcuType::undef());
            record(s, "T-Free");
            return StmtResult::of(out);
        }

        case StmtKind::FieldWrite:
            if (!write)
                return StmtResult::error(diag(
                    "ToRCURead", s, "heap mutation in read-side critical section", env));
            return check_field_write(env, s);

        case StmtKind::SyncStart:
        case StmtKind::SyncStop:
            if (!write)
                return StmtResult::error(diag(
                    "ToRCURead", s, "grace period in read-side critical section", env));
            return StmtResult::error(diag(
                "T-Sync", s, "SyncStart must be immediately followed by SyncStop", env));

        default:
            return StmtResult::error(diag("artifact", s, "not an atomic statement", env));
    }
}

// ---------------------------------------------------------------------------
// Heap writes: T-WriteFH / T-Replace / T-Insert / T-LinkF-Null / T-UnlinkH

StmtResult Checker::check_field_write(const TypeEnv& env, const Stmt& s) {
    const unsigned bound = opts_.mayalias_bound;
    const auto& target = env.get(s.var_a);

    // Fresh target: T-WriteFH (plus its null-store form).
    if (target.kind == RcuType::Kind::RcuFresh) {
        if (target.fmap.lookup(s.field))
            return StmtResult::error(diag(
                "T-WriteFH", s, "field " + s.field + " already set on fresh node", env));
        TypeEnv out = env;
        RcuType pt = target;
        if (s.rhs_null) {
            pt.fmap.set({s.field}, FieldTarget::null());
            out.set(s.var_a, std::move(pt));
            record(s, "T-WriteFH");
            return StmtResult::of(out);
        }
        const auto& z = env.get(s.var_b);
        if (z.kind != RcuType::Kind::RcuItr)
            return StmtResult::error(diag(
                "T-WriteFH", s, s.var_b + " is not rcuItr", env));
        // Some x:rcuItr rho N with N(f) = z and z at rho.f anchors the write.
        bool anchored = false;
        for (const auto& [xv, xt] : env.bindings) {
            if (xt.kind != RcuType::Kind::RcuItr) continue;
            const auto* e = xt.fmap.lookup(s.field);
            if (!e || e->first != FieldSet{s.field}) continue;
            if (e->second != FieldTarget::of(s.var_b)) continue;
            if (xt.path.append(PathSeg::concrete(s.field)) == z.path) {
                anchored = true;
                break;
            }
        }
        if (!anchored)
            return StmtResult::error(diag(
                "T-WriteFH", s,
                "no rcuItr binding witnesses " + s.var_b + " = _." + s.field, env));
        pt.fmap.set({s.field}, FieldTarget::of(s.var_b));
        out.set(s.var_a, std::move(pt));
        record(s, "T-WriteFH");
        return StmtResult::of(out);
    }

    if (target.kind != RcuType::Kind::RcuItr)
        return StmtResult::error(diag(
            "T-UnlinkH", s, s.var_a + " is not rcuItr or rcuFresh: " + to_string(target), env));

    const Path& rho = target.path;

    if (!s.rhs_null && env.get(s.var_b).kind == RcuType::Kind::RcuFresh) {
        const RcuType& fresh = env.get(s.var_b);
        const auto* pf = target.fmap.lookup(s.field);

        // T-Replace: p.f = n with o = N(f), o's field map equal to n's.
        if (pf && pf->first == FieldSet{s.field} && !pf->second.is_null()) {
            const std::string o = pf->second.var;
            const auto& ot = env.get(o);
            Path rho1 = rho.append(PathSeg::concrete(s.field));
            if (ot.kind == RcuType::Kind::RcuItr && ot.path == rho1) {
                if (ot.fmap == fresh.fmap) {
                    std::set<std::string> trio{s.var_a, o, s.var_b};
                    for (const auto& v : trio)
                        if (targeted_in(env, v, trio))
                            return StmtResult::error(diag(
                                "T-Replace", s, v + " occurs free in the context", env));
                    FramingQuery q;
                    q.forbidden_aliases = {rho, rho1};
                    q.forbidden_targets = {o};
                    if (auto viol = framing_violation(env, trio, q, bound))
                        return StmtResult::error(diag(
                            "T-Replace", s, "framing failure: " + *viol, env));
                    TypeEnv out = env;
                    RcuType pt = target;
                    pt.fmap.set({s.field}, FieldTarget::of(s.var_b));
                    out.set(s.var_a, std::move(pt));
                    out.set(s.var_b, RcuType::itr(rho1, fresh.fmap));
                    out.set(o, RcuType::unlinked());
                    record(s, "T-Replace");
                    return StmtResult::of(out);
                }
                // T-Insert: n slots between p and o; n's linked-through entry
                // targets o, its other fields are null.
                std::optional<std::string> f4;
                bool rest_null = true;
                for (const auto& [k, t] : fresh.fmap.entries) {
                    if (t == FieldTarget::of(o) && k.size() == 1 && !f4)
                        f4 = *k.begin();
                    else if (!t.is_null())
                        rest_null = false;
                }
                if (f4 && rest_null) {
                    std::set<std::string> trio{s.var_a, o, s.var_b};
                    for (const auto& v : trio)
                        if (targeted_in(env, v, trio))
                            return StmtResult::error(diag(
                                "T-Insert", s, v + " occurs free in the context", env));
                    FramingQuery q;
                    q.no_descendants_of = rho;
                    if (auto viol = framing_violation(env, trio, q, bound))
                        return StmtResult::error(diag(
                            "T-Insert", s, "framing failure: " + *viol, env));
                    TypeEnv out = env;
                    RcuType pt = target;
                    pt.fmap.set({s.field}, FieldTarget::of(s.var_b));
                    out.set(s.var_a, std::move(pt));
                    out.set(s.var_b, RcuType::itr(rho1, fresh.fmap));
                    RcuType ot2 = ot;
                    ot2.path = rho1.append(PathSeg::concrete(*f4));
                    out.set(o, std::move(ot2));
                    record(s, "T-Insert");
                    return StmtResult::of(out);
                }
                return StmtResult::error(diag(
                    "T-Replace", s,
                    "field maps of " + o + " and " + s.var_b + " differ and " + s.var_b +
                        " has no insert shape",
                    env));
            }
        }

        // T-LinkF-Null: p.f currently null, every field of the fresh node null.
        if (pf && pf->first == FieldSet{s.field} && pf->second.is_null()) {
            for (const auto& [k, t] : fresh.fmap.entries)
                if (!t.is_null())
                    return StmtResult::error(diag(
                        "T-LinkF-Null", s,
                        s.var_b + " has a non-null field but " + s.var_a + "." + s.field +
                            " is null",
                        env));
            std::set<std::string> pair{s.var_a, s.var_b};
            if (targeted_in(env, s.var_b, pair))
                return StmtResult::error(diag(
                    "T-LinkF-Null", s, s.var_b + " occurs free in the context", env));
            FramingQuery q;
            q.forbidden_aliases = {rho};
            if (auto viol = framing_violation(env, pair, q, bound))
                return StmtResult::error(diag(
                    "T-LinkF-Null", s, "framing failure: " + *viol, env));
            TypeEnv out = env;
            RcuType pt = target;
            pt.fmap.set({s.field}, FieldTarget::of(s.var_b));
            out.set(s.var_a, std::move(pt));
            out.set(s.var_b, RcuType::itr(rho.append(PathSeg::concrete(s.field)), fresh.fmap));
            record(s, "T-LinkF-Null");
            return StmtResult::of(out);
        }
        return StmtResult::error(diag(
            "T-Replace", s,
            s.var_a + "." + s.field + " has no tracked target to replace or insert at", env));
    }

    if (s.rhs_null)
        return StmtResult::error(diag(
            "T-UnlinkH", s, "no rule stores null into a linked node's field", env));

    // T-UnlinkH: x.f1 = r where N(f1) = z and z.f2 == r.
    const auto& r = env.get(s.var_b);
    if (r.kind != RcuType::Kind::RcuItr)
        return StmtResult::error(diag(
            "T-UnlinkH", s, s.var_b + " is not rcuItr: " + to_string(r), env));
    const auto* e1 = target.fmap.lookup(s.field);
    if (!e1 || e1->first != FieldSet{s.field} || e1->second.is_null())
        return StmtResult::error(diag(
            "T-UnlinkH", s, s.var_a + "." + s.field + " has no tracked node to unlink", env));
    const std::string z = e1->second.var;
    const auto& zt = env.get(z);
    Path rho1 = rho.append(PathSeg::concrete(s.field));
    if (zt.kind != RcuType::Kind::RcuItr || zt.path != rho1)
        return StmtResult::error(diag(
            "T-UnlinkH", s, z + " is not at path " + to_string(rho1), env));
    std::optional<std::string> f2;
    for (const auto& [k, t] : zt.fmap.entries)
        if (t == FieldTarget::of(s.var_b) && k.size() == 1) f2 = *k.begin();
    if (!f2)
        return StmtResult::error(diag(
            "T-UnlinkH", s, s.var_b + " is not a tracked field of " + z, env));
    Path rho2 = rho1.append(PathSeg::concrete(*f2));
    if (r.path != rho2)
        return StmtResult::error(diag(
            "T-UnlinkH", s, s.var_b + " is not at path " + to_string(rho2), env));
    // Unlink exactly one node: every other field of z is explicitly null.
    for (const auto& [k, t] : zt.fmap.entries) {
        if (k == FieldSet{*f2}) continue;
        if (!t.is_null())
            return StmtResult::error(diag(
                "T-UnlinkH", s,
                z + " has non-null sibling field " + *k.begin() + ", unlink would drop it",
                env));
    }
    for (const auto& [f, kind] : fields_.kinds) {
        if (kind != FieldKind::Rcu || f == *f2) continue;
        const auto* ze = zt.fmap.lookup(f);
        if (!ze)
            return StmtResult::error(diag(
                "T-UnlinkH", s, z + "." + f + " is not known to be null", env));
    }
    std::set<std::string> trio{s.var_a, z, s.var_b};
    FramingQuery q;
    q.forbidden_aliases = {rho, rho1, rho2};
    q.forbidden_targets = {z, s.var_b};
    q.no_descendants_of = rho2;
    if (auto viol = framing_violation(env, trio, q, opts_.mayalias_bound))
        return StmtResult::error(diag("T-UnlinkH", s, "framing failure: " + *viol, env));

    TypeEnv out = env;
    RcuType xt = target;
    xt.fmap.set({s.field}, FieldTarget::of(s.var_b));
    out.set(s.var_a, std::move(xt));
    out.set(z, RcuType::unlinked());
    RcuType rt = r;
    rt.path = rho1;
    out.set(s.var_b, std::move(rt));
    record(s, "T-UnlinkH");
    return StmtResult::of(out);
}

// ---------------------------------------------------------------------------
// Control flow

StmtResult Checker::check_seq(const TypeEnv& env, const std::vector<Stmt>& stmts,
                              CheckMode mode) {
    TypeEnv cur = env;
    for (size_t i = 0; i < stmts.size(); ++i) {
        const Stmt& s = stmts[i];
        if (s.kind == StmtKind::SyncStart) {
            if (mode == CheckMode::Read)
                return StmtResult::error(diag(
                    "ToRCURead", s, "grace period in read-side critical section", cur));
            if (i + 1 >= stmts.size() || stmts[i + 1].kind != StmtKind::SyncStop)
                return StmtResult::error(diag(
                    "T-Sync", s, "SyncStart must be immediately followed by SyncStop", cur));
            for (auto& [var, t] : cur.bindings)
                if (t.kind == RcuType::Kind::Unlinked) t = RcuType::freeable();
            record(s, "T-Sync");
            ++i;  // consume the SyncStop
            continue;
        }
        auto r = check_stmt(cur, s, mode);
        if (!r.ok()) return r;
        cur = std::move(*r.env);
    }
    return StmtResult::of(cur);
}

StmtResult Checker::check_stmt(const TypeEnv& env, const Stmt& s, CheckMode mode) {
    switch (s.kind) {
        case StmtKind::Seq:
            return check_seq(env, s.children, mode);
        case StmtKind::AssertSite:
            asserts_.push_back({s.assert_id, s.span, env, s.assert_env_text});
            return StmtResult::of(env);
        case StmtKind::IfBool:
        case StmtKind::IfFieldEq:
        case StmtKind::IfFieldNull:
            return check_if(env, s, mode);
        case StmtKind::WhileBool:
        case StmtKind::WhileFieldNonNull:
            return check_while(env, s, mode);
        case StmtKind::SyncStart:
        case StmtKind::SyncStop:
            // Valid pairs are consumed by check_seq.
            return check_atomic(env, s, mode);
        default:
            return check_atomic(env, s, mode);
    }
}

namespace {

// Refines every binding whose path extends `prefix` through an Alt segment
// equal to `key` immediately after it: the segment is narrowed to `narrowed`.
void refine_paths(TypeEnv& env, const Path& prefix, const FieldSet& key,
                  const FieldSet& narrowed) {
    size_t n = prefix.segs.size();
    for (auto& [var, t] : env.bindings) {
        if (t.kind != RcuType::Kind::RcuItr) continue;
        if (t.path.segs.size() <= n) continue;
        if (!std::equal(prefix.segs.begin(), prefix.segs.end(), t.path.segs.begin())) continue;
        auto& seg = t.path.segs[n];
        if (seg.kind == PathSeg::Kind::Rep || seg.fields != key) continue;
        seg = (narrowed.size() == 1) ? PathSeg::concrete(*narrowed.begin())
                                     : PathSeg::alt(narrowed);
    }
}

}  // namespace

StmtResult Checker::check_if(const TypeEnv& env, const Stmt& s, CheckMode mode) {
    TypeEnv then_env = env;
    TypeEnv else_env = env;
    std::string rule = "T-Branch2";

    if (s.kind == StmtKind::IfBool) {
        if (env.get(s.var_a).kind != RcuType::Kind::Bool)
            return StmtResult::error(diag(
                "T-Branch2", s, s.var_a + " is not bool", env));
    } else if (mode == CheckMode::Read) {
        auto k = env.get(s.var_a).kind;
        if (k != RcuType::Kind::RcuItrBare && k != RcuType::Kind::RcuItr)
            return StmtResult::error(diag(
                s.kind == StmtKind::IfFieldEq ? "T-Branch1" : "T-Branch3", s,
                s.var_a + " is not rcuItr", env));
    } else if (mode == CheckMode::Write) {
        const auto& x = env.get(s.var_a);
        if (x.kind != RcuType::Kind::RcuItr)
            return StmtResult::error(diag(
                s.kind == StmtKind::IfFieldEq ? "T-Branch1" : "T-Branch3", s,
                s.var_a + " is not rcuItr", env));
        if (s.kind == StmtKind::IfFieldEq) {
            rule = "T-Branch1";
            const auto* e = x.fmap.lookup(s.field);
            if (!e || e->second != FieldTarget::of(s.var_b))
                return StmtResult::error(diag(
                    "T-Branch1", s,
                    s.var_a + "." + s.field + " is not tracked as " + s.var_b, env));
            FieldSet key = e->first;
            // Then branch: the entry and every dependent path narrow to f1.
            {
                RcuType xt = x;
                xt.fmap.erase_containing(s.field);
                xt.fmap.set({s.field}, FieldTarget::of(s.var_b));
                then_env.set(s.var_a, xt);
                refine_paths(then_env, x.path, key, {s.field});
            }
            if (key.size() > 1) {
                FieldSet rest = key;
                rest.erase(s.field);
                RcuType xt = x;
                xt.fmap.erase_containing(s.field);
                xt.fmap.set(rest, FieldTarget::of(s.var_b));
                else_env.set(s.var_a, xt);
                refine_paths(else_env, x.path, key, rest);
            }
        } else {  // IfFieldNull
            rule = "T-Branch3";
            const auto* e = x.fmap.lookup(s.field);
            if (!e || e->first != FieldSet{s.field})
                return StmtResult::error(diag(
                    "T-Branch3", s, s.var_a + "." + s.field + " is not tracked", env));
            RcuType xt = x;
            xt.fmap.set({s.field}, FieldTarget::null());
            then_env.set(s.var_a, std::move(xt));
        }
    }

    auto rt = check_stmt(then_env, s.children[0], mode);
    if (!rt.ok()) return rt;
    auto re = check_stmt(else_env, s.children[1], mode);
    if (!re.ok()) return re;
    record(s, rule);
    return join_envs(*rt.env, *re.env, s, mode);
}

StmtResult Checker::check_while(const TypeEnv& env, const Stmt& s, CheckMode mode) {
    const bool pure_shape = s.kind == StmtKind::WhileFieldNonNull && s.flag_var.empty();
    const std::string rule = s.kind == StmtKind::WhileBool ? "T-Loop1" : "T-Loop2";

    if (s.kind == StmtKind::WhileBool && env.get(s.var_a).kind != RcuType::Kind::Bool)
        return StmtResult::error(diag("T-Loop1", s, s.var_a + " is not bool", env));
    if (s.kind == StmtKind::WhileFieldNonNull && !s.flag_var.empty() &&
        env.get(s.flag_var).kind != RcuType::Kind::Bool)
        return StmtResult::error(diag("T-Loop2", s, s.flag_var + " is not bool", env));

    if (mode == CheckMode::Read && s.kind == StmtKind::WhileFieldNonNull) {
        auto k = env.get(s.var_a).kind;
        if (k != RcuType::Kind::RcuItrBare && k != RcuType::Kind::RcuItr)
            return StmtResult::error(diag(
                "T-Loop2", s, s.var_a + " is not rcuItr", env));
    }

    if (mode == CheckMode::Read || !s.annot) {
        // Bare types do not change across iterations; the environment itself
        // is the invariant.
        if (mode == CheckMode::Write && s.kind == StmtKind::WhileFieldNonNull)
            return StmtResult::error(diag(
                rule, s, "heap-guarded loop requires an @invariant annotation", env));
        auto rb = check_stmt(env, s.children[0], mode);
        if (!rb.ok()) return rb;
        if (!env_subtype(*rb.env, env))
            return StmtResult::error(diag(
                rule, s, "loop body does not preserve the environment", env));
        record(s, rule);
        return StmtResult::of(env);
    }

    auto inv = parse_env(s.annot->invariant_text);
    if (!inv)
        return StmtResult::error(diag(
            "artifact", s, "malformed @invariant annotation", env));

    // Carry unlisted bindings from the entry environment.
    TypeEnv inv_full = env;
    for (const auto& [var, t] : inv->bindings) inv_full.set(var, t);

    if (s.kind == StmtKind::WhileFieldNonNull &&
        inv_full.get(s.var_a).kind != RcuType::Kind::RcuItr)
        return StmtResult::error(diag(
            "T-Loop2", s, "loop guard variable " + s.var_a + " is not rcuItr in the invariant",
            env));

    // Entry: the invariant's new index variables start at zero repetitions.
    auto entry_ivars = env.index_vars();
    TypeEnv inv_zero = inv_full;
    for (const auto& k : inv_full.index_vars())
        if (!entry_ivars.count(k)) inv_zero = env_instantiate_zero(inv_zero, k);
    if (!env_subtype(env, inv_zero))
        return StmtResult::error(diag(
            rule, s, "loop entry environment does not establish the invariant", env));

    auto rb = check_stmt(inv_full, s.children[0], mode);
    if (!rb.ok()) return rb;

    TypeEnv back = *rb.env;
    for (const auto& [k, fs] : s.annot->reindex) back = env_reindex(back, k, fs);
    if (!back.index_vars().empty() || !s.annot->reindex.empty()) record(s, "T-ReIndex");
    if (!env_subtype(back, inv_full))
        return StmtResult::error(diag(
            rule, s, "loop invariant not preserved by the body", env));

    TypeEnv exit_env = inv_full;
    if (pure_shape) {
        RcuType xt = exit_env.get(s.var_a);
        xt.fmap.erase_containing(s.field);
        xt.fmap.set({s.field}, FieldTarget::null());
        exit_env.set(s.var_a, std::move(xt));
    }
    record(s, rule);
    return StmtResult::of(exit_env);
}

// ---------------------------------------------------------------------------
// Joins

namespace {

std::optional<Path> join_paths(const Path& a, const Path& b) {
    if (a.segs.size() != b.segs.size()) return std::nullopt;
    Path out;
    for (size_t i = 0; i < a.segs.size(); ++i) {
        const auto& sa = a.segs[i];
        const auto& sb = b.segs[i];
        if (sa == sb) {
            out.segs.push_back(sa);
            continue;
        }
        if (sa.kind == PathSeg::Kind::Rep || sb.kind == PathSeg::Kind::Rep)
            return std::nullopt;
        FieldSet u = sa.fields;
        u.insert(sb.fields.begin(), sb.fields.end());
        out.segs.push_back(u.size() == 1 ? PathSeg::concrete(*u.begin()) : PathSeg::alt(u));
    }
    return out;
}

FieldMap join_fmaps(const FieldMap& a, const FieldMap& b) {
    FieldMap out;
    for (const auto& [ka, ta] : a.entries) {
        for (const auto& [kb, tb] : b.entries) {
            if (ta != tb) continue;
            FieldSet u = ka;
            u.insert(kb.begin(), kb.end());
            (void)out.set(u, ta);  // key collisions drop the entry
            break;
        }
    }
    return out;
}

}  // namespace

StmtResult Checker::join_envs(const TypeEnv& a, const TypeEnv& b, const Stmt& at,
                              CheckMode mode) {
    TypeEnv out;
    std::set<std::string> vars;
    for (const auto& [v, t] : a.bindings) vars.insert(v);
    for (const auto& [v, t] : b.bindings) vars.insert(v);
    for (const auto& v : vars) {
        const auto& ta = a.get(v);
        const auto& tb = b.get(v);
        if (ta == tb) {
            if (a.has(v)) out.set(v, ta);
            continue;
        }
        if (ta.linear() || tb.linear())
            return StmtResult::error(diag(
                "T-Conseq", at,
                "join failure: " + v + " is " + to_string(ta) + " versus " + to_string(tb),
                a));
        if (ta.kind == RcuType::Kind::RcuItr && tb.kind == RcuType::Kind::RcuItr) {
            auto p = join_paths(ta.path, tb.path);
            if (p) {
                out.set(v, RcuType::itr(std::move(*p), join_fmaps(ta.fmap, tb.fmap)));
                continue;
            }
        }
        // Branches disagree irreconcilably; the binding is forgotten.
        out.set(v, RcuType::undef());
    }
    (void)mode;
    return StmtResult::of(out);
}

// ---------------------------------------------------------------------------
// Blocks and programs

StmtResult Checker::check_block(const TypeEnv& env0, const Block& block) {
    CheckMode mode = block.is_write ? CheckMode::Write : CheckMode::Read;
    TypeEnv env = env0;
    env.set(block.bind_var,
            block.is_write
                ? RcuType::itr(Path{{PathSeg::concrete(block.field)}}, {})
                : RcuType::itr_bare());
    auto r = check_stmt(env, block.body, mode);
    if (!r.ok()) return r;
    if (block.is_write) {
        struct {
            Gate gate;
            const char* what;
        } gates[] = {
            {Gate::NoFresh, "fresh but never linked"},
            {Gate::NoUnlinked, "unlinked but never freed"},
            {Gate::NoFreeable, "freeable but never freed"},
        };
        for (const auto& g : gates) {
            if (auto w = env_gate_witness(*r.env, g.gate)) {
                Stmt at;
                at.span = block.span;
                return StmtResult::error(diag(
                    "ToRCUWrite", at, *w + " leaks from the critical section (" + g.what + ")",
                    *r.env));
            }
        }
    }
    return r;
}

CheckReport check_program(const Program& p, CheckOptions opts) {
    CheckReport report;
    for (const auto& t : p.threads) {
        Checker checker(p.field_types, opts);
        TypeEnv env0;
        env0.set(p.root_var, RcuType::root());
        std::optional<Diagnostic> failure;
        for (const auto& b : t.blocks) {
            if ((t.kind == ThreadKind::Writer) != b.is_write) {
                Stmt at;
                at.span = b.span;
                failure = Diagnostic{
                    b.is_write ? "ToRCUWrite" : "ToRCURead", b.span,
                    "block kind does not match thread kind", env0};
                break;
            }
            auto r = checker.check_block(env0, b);
            if (!r.ok()) {
                failure = std::move(*r.diag);
                break;
            }
        }
        report.threads.push_back({t.name, std::move(failure)});
        auto& obs = checker.asserts();
        report.asserts.insert(report.asserts.end(), obs.begin(), obs.end());
        auto& tr = checker.trace();
        report.trace.insert(report.trace.end(), tr.begin(), tr.end());
    }
    return report;
}

}  // namespace rcuguard
