#include "rcuguard/paths.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace rcuguard {

PathSeg PathSeg::concrete(std::string f) {
    PathSeg s;
    s.kind = Kind::Concrete;
    s.fields.insert(std::move(f));
    return s;
}

PathSeg PathSeg::alt(FieldSet fs) {
    assert(fs.size() >= 2);
    PathSeg s;
    s.kind = Kind::Alt;
    s.fields = std::move(fs);
    return s;
}

PathSeg PathSeg::rep(FieldSet fs, std::string index_var) {
    assert(!fs.empty());
    PathSeg s;
    s.kind = Kind::Rep;
    s.fields = std::move(fs);
    s.index = std::move(index_var);
    return s;
}

Path Path::append(const PathSeg& s) const {
    Path out = *this;
    out.segs.push_back(s);
    return out;
}

std::set<std::string> Path::index_vars() const {
    std::set<std::string> vars;
    for (const auto& s : segs)
        if (s.kind == PathSeg::Kind::Rep) vars.insert(s.index);
    return vars;
}

static std::string fields_joined(const FieldSet& fs) {
    std::string out;
    for (const auto& f : fs) {
        if (!out.empty()) out += "|";
        out += f;
    }
    return out;
}

std::string to_string(const PathSeg& seg) {
    switch (seg.kind) {
        case PathSeg::Kind::Concrete:
            return *seg.fields.begin();
        case PathSeg::Kind::Alt:
            return "(" + fields_joined(seg.fields) + ")";
        case PathSeg::Kind::Rep:
            return "(" + fields_joined(seg.fields) + ")^" + seg.index;
    }
    return {};
}

std::string to_string(const Path& p) {
    if (p.segs.empty()) return "eps";
    std::string out;
    for (const auto& s : p.segs) {
        if (!out.empty()) out += ".";
        out += to_string(s);
    }
    return out;
}

namespace {

struct Cursor {
    const std::string& s;
    size_t i = 0;

    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    bool eat(char c) {
        skip_ws();
        if (i < s.size() && s[i] == c) {
            ++i;
            return true;
        }
        return false;
    }
    bool peek(char c) {
        skip_ws();
        return i < s.size() && s[i] == c;
    }
    std::optional<std::string> ident() {
        skip_ws();
        size_t start = i;
        while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
        if (i == start) return std::nullopt;
        return s.substr(start, i - start);
    }
    bool done() {
        skip_ws();
        return i >= s.size();
    }
};

std::optional<PathSeg> parse_seg(Cursor& c) {
    FieldSet fields;
    if (c.eat('(')) {
        auto f = c.ident();
        if (!f) return std::nullopt;
        fields.insert(*f);
        while (c.eat('|')) {
            auto g = c.ident();
            if (!g) return std::nullopt;
            fields.insert(*g);
        }
        if (!c.eat(')')) return std::nullopt;
    } else {
        auto f = c.ident();
        if (!f) return std::nullopt;
        fields.insert(*f);
    }
    if (c.eat('^')) {
        auto idx = c.ident();
        if (!idx) return std::nullopt;
        return PathSeg::rep(std::move(fields), *idx);
    }
    if (fields.size() >= 2) return PathSeg::alt(std::move(fields));
    return PathSeg::concrete(*fields.begin());
}

}  // namespace

std::optional<Path> parse_path(const std::string& text) {
    Cursor c{text};
    c.skip_ws();
    Path p;
    if (text.size() >= c.i + 3 && text.compare(c.i, 3, "eps") == 0) {
        c.i += 3;
        if (!c.done()) return std::nullopt;
        return p;
    }
    auto first = parse_seg(c);
    if (!first) return std::nullopt;
    p.segs.push_back(std::move(*first));
    while (c.eat('.')) {
        auto seg = parse_seg(c);
        if (!seg) return std::nullopt;
        p.segs.push_back(std::move(*seg));
    }
    if (!c.done()) return std::nullopt;
    // One index variable names one repetition: two Rep segments never share.
    std::set<std::string> seen;
    for (const auto& seg : p.segs)
        if (seg.kind == PathSeg::Kind::Rep && !seen.insert(seg.index).second)
            return std::nullopt;
    return p;
}

// ---------------------------------------------------------------------------

ConcretizeResult concretize(const Path& p,
                            const std::map<std::string, unsigned>& assignment,
                            unsigned depth) {
    ConcretizeResult result;
    // Worklist of partial expansions.
    std::set<std::vector<std::string>> partial{{}};
    for (const auto& seg : p.segs) {
        std::set<std::vector<std::string>> next;
        unsigned reps = 1;
        if (seg.kind == PathSeg::Kind::Rep) {
            auto it = assignment.find(seg.index);
            assert(it != assignment.end() && "missing index assignment");
            reps = it->second;
        }
        for (const auto& prefix : partial) {
            // Expand `reps` independent choices among seg.fields.
            std::set<std::vector<std::string>> grown{prefix};
            for (unsigned r = 0; r < reps; ++r) {
                std::set<std::vector<std::string>> g2;
                for (const auto& seq : grown) {
                    if (seq.size() >= depth) {
                        result.overflow = true;
                        continue;
                    }
                    for (const auto& f : seg.fields) {
                        auto s = seq;
                        s.push_back(f);
                        g2.insert(std::move(s));
                    }
                }
                grown = std::move(g2);
            }
            next.insert(grown.begin(), grown.end());
        }
        partial = std::move(next);
    }
    for (auto& seq : partial) {
        if (seq.size() <= depth)
            result.sequences.insert(seq);
        else
            result.overflow = true;
    }
    return result;
}

namespace {

// Concrete length of a path as an affine expression: constant plus a sum
// of index variables with multiplicities.
struct AffineLen {
    long constant = 0;
    std::map<std::string, long> coeffs;
};

AffineLen affine_len(const Path& p) {
    AffineLen a;
    for (const auto& s : p.segs) {
        if (s.kind == PathSeg::Kind::Rep)
            a.coeffs[s.index] += 1;
        else
            a.constant += 1;
    }
    return a;
}

// Can len(a) == len(b) hold for some naturals? Shared variables cancel by
// coefficient; the answer errs toward true.
bool lengths_can_match(const AffineLen& a, const AffineLen& b) {
    std::map<std::string, long> diff = a.coeffs;
    for (const auto& [v, c] : b.coeffs) diff[v] -= c;
    long d = b.constant - a.constant;  // need sum(diff_i * k_i) == d
    bool pos = false, neg = false;
    for (const auto& [v, c] : diff) {
        if (c > 0) pos = true;
        if (c < 0) neg = true;
    }
    if (pos && neg) return true;
    if (pos) return d >= 0;
    if (neg) return d <= 0;
    return d == 0;
}

bool enumerate_intersects(const Path& a, const Path& b, unsigned bound) {
    std::set<std::string> vars = a.index_vars();
    auto bv = b.index_vars();
    vars.insert(bv.begin(), bv.end());
    std::vector<std::string> vlist(vars.begin(), vars.end());

    // Depth large enough that no in-bound expansion overflows.
    unsigned depth = 0;
    for (const Path* p : {&a, &b}) {
        unsigned d = 0;
        for (const auto& s : p->segs) d += (s.kind == PathSeg::Kind::Rep) ? bound : 1;
        depth = std::max(depth, d);
    }
    depth += 1;

    std::map<std::string, unsigned> asg;
    // Odometer over assignments in 0..bound.
    std::vector<unsigned> vals(vlist.size(), 0);
    while (true) {
        for (size_t i = 0; i < vlist.size(); ++i) asg[vlist[i]] = vals[i];
        auto ca = concretize(a, asg, depth);
        auto cb = concretize(b, asg, depth);
        for (const auto& seq : ca.sequences)
            if (cb.sequences.count(seq)) return true;
        // advance odometer
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
    return false;
}

}  // namespace

bool may_alias(const Path& a, const Path& b, unsigned bound) {
    assert(bound >= 1);
    if (a == b) return true;
    if (enumerate_intersects(a, b, bound)) return true;
    // Without index variables the enumeration was exhaustive.
    if (a.index_vars().empty() && b.index_vars().empty()) return false;
    // Disjoint within the bound; sound to answer false only if the lengths
    // can never match beyond it either.
    if (!lengths_can_match(affine_len(a), affine_len(b))) return false;
    return true;
}

bool may_alias(const Path& a, std::span<const Path> bs, unsigned bound) {
    for (const auto& b : bs)
        if (may_alias(a, b, bound)) return true;
    return false;
}

// ---------------------------------------------------------------------------

bool path_subtype(const Path& a, const Path& b) {
    if (a.segs.size() != b.segs.size()) return false;
    for (size_t i = 0; i < a.segs.size(); ++i) {
        const auto& sa = a.segs[i];
        const auto& sb = b.segs[i];
        if (sa.kind == PathSeg::Kind::Rep || sb.kind == PathSeg::Kind::Rep) {
            if (!(sa == sb)) return false;
            continue;
        }
        // Concrete or Alt on both sides: widening means subset.
        if (!std::includes(sb.fields.begin(), sb.fields.end(),
                           sa.fields.begin(), sa.fields.end()))
            return false;
    }
    return true;
}

Path reindex_path(const Path& p, const std::string& index_var, const FieldSet& fields) {
    Path out;
    size_t i = 0;
    while (i < p.segs.size()) {
        const auto& seg = p.segs[i];
        out.segs.push_back(seg);
        if (seg.kind == PathSeg::Kind::Rep && seg.index == index_var &&
            i + 1 < p.segs.size()) {
            const auto& next = p.segs[i + 1];
            if (next.kind != PathSeg::Kind::Rep &&
                std::includes(seg.fields.begin(), seg.fields.end(),
                              next.fields.begin(), next.fields.end()) &&
                std::includes(fields.begin(), fields.end(),
                              next.fields.begin(), next.fields.end())) {
                i += 2;  // contract: drop the following segment
                continue;
            }
        }
        ++i;
    }
    return out;
}

// ---------------------------------------------------------------------------

const std::pair<FieldSet, FieldTarget>* FieldMap::lookup(const std::string& field) const {
    for (const auto& e : entries)
        if (e.first.count(field)) return &e;
    return nullptr;
}

const FieldTarget* FieldMap::lookup_exact(const FieldSet& key) const {
    for (const auto& e : entries)
        if (e.first == key) return &e.second;
    return nullptr;
}

bool FieldMap::set(const FieldSet& key, FieldTarget target) {
    // Replace an entry with the identical key; otherwise keys must stay disjoint.
    for (auto& e : entries) {
        if (e.first == key) {
            e.second = std::move(target);
            return true;
        }
    }
    for (const auto& e : entries) {
        for (const auto& f : key)
            if (e.first.count(f)) return false;
    }
    entries.emplace_back(key, std::move(target));
    std::sort(entries.begin(), entries.end());
    return true;
}

void FieldMap::erase_containing(const std::string& field) {
    std::erase_if(entries, [&](const auto& e) { return e.first.count(field) != 0; });
}

std::set<std::string> FieldMap::var_targets() const {
    std::set<std::string> out;
    for (const auto& e : entries)
        if (e.second.kind == FieldTarget::Kind::Var) out.insert(e.second.var);
    return out;
}

std::string to_string(const FieldMap& m) {
    std::string out = "{";
    bool first = true;
    for (const auto& [key, target] : m.entries) {
        if (!first) out += ", ";
        first = false;
        out += fields_joined(key);
        out += " -> ";
        out += target.is_null() ? "null" : target.var;
    }
    out += "}";
    return out;
}

std::optional<FieldMap> parse_fieldmap(const std::string& text) {
    Cursor c{text};
    if (!c.eat('{')) return std::nullopt;
    FieldMap m;
    if (c.eat('}')) {
        if (!c.done()) return std::nullopt;
        return m;
    }
    while (true) {
        FieldSet key;
        auto f = c.ident();
        if (!f) return std::nullopt;
        key.insert(*f);
        while (c.eat('|')) {
            auto g = c.ident();
            if (!g) return std::nullopt;
            key.insert(*g);
        }
        if (!c.eat('-') || !c.eat('>')) return std::nullopt;
        auto t = c.ident();
        if (!t) return std::nullopt;
        FieldTarget target = (*t == "null") ? FieldTarget::null() : FieldTarget::of(*t);
        if (!m.set(key, target)) return std::nullopt;
        if (c.eat('}')) break;
        if (!c.eat(',')) return std::nullopt;
    }
    if (!c.done()) return std::nullopt;
    return m;
}

bool fieldmap_subtype(const FieldMap& a, const FieldMap& b) {
    // Every entry of b must be a widened entry of a; extra entries of a are
    // deletions.
    for (const auto& [bk, bt] : b.entries) {
        bool matched = false;
        for (const auto& [ak, at] : a.entries) {
            if (at == bt &&
                std::includes(bk.begin(), bk.end(), ak.begin(), ak.end())) {
                matched = true;
                break;
            }
        }
        if (!matched) return false;
    }
    return true;
}

}  // namespace rcuguard
