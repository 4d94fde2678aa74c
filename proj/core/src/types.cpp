#include "rcuguard/types.hpp"

#include <sstream>

namespace rcuguard {

std::string to_string(const RcuType& t) {
    switch (t.kind) {
        case RcuType::Kind::RcuItr:
            return "rcuItr " + to_string(t.path) + " " + to_string(t.fmap);
        case RcuType::Kind::RcuItrBare:
            return "rcuItr";
        case RcuType::Kind::RcuFresh:
            return "rcuFresh " + to_string(t.fmap);
        case RcuType::Kind::Unlinked:
            return "unlinked";
        case RcuType::Kind::Undef:
            return "undef";
        case RcuType::Kind::Freeable:
            return "freeable";
        case RcuType::Kind::RcuRoot:
            return "rcuRoot";
        case RcuType::Kind::Bool:
            return "bool";
    }
    return {};
}

namespace {

// Splits "rcuItr (Next)^k.Next {Next -> cur}" into the keyword, the path
// part and the optional {...} part.
struct TypeText {
    std::string word;
    std::string middle;
    std::string braces;
};

std::optional<TypeText> split_type_text(const std::string& text) {
    TypeText out;
    size_t i = 0;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) ++i;
    if (i == start) return std::nullopt;
    out.word = text.substr(start, i - start);
    size_t brace = text.find('{', i);
    if (brace == std::string::npos) {
        out.middle = text.substr(i);
    } else {
        out.middle = text.substr(i, brace - i);
        out.braces = text.substr(brace);
    }
    auto trim = [](std::string& s) {
        size_t b = s.find_first_not_of(" \t");
        size_t e = s.find_last_not_of(" \t");
        s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(out.middle);
    trim(out.braces);
    return out;
}

}  // namespace

std::optional<RcuType> parse_type(const std::string& text) {
    auto parts = split_type_text(text);
    if (!parts) return std::nullopt;
    const auto& w = parts->word;
    if (w == "unlinked" || w == "undef" || w == "freeable" || w == "rcuRoot" || w == "bool") {
        if (!parts->middle.empty() || !parts->braces.empty()) return std::nullopt;
        if (w == "unlinked") return RcuType::unlinked();
        if (w == "undef") return RcuType::undef();
        if (w == "freeable") return RcuType::freeable();
        if (w == "rcuRoot") return RcuType::root();
        return RcuType::boolean();
    }
    if (w == "rcuFresh") {
        if (!parts->middle.empty()) return std::nullopt;
        auto m = parse_fieldmap(parts->braces.empty() ? "{}" : parts->braces);
        if (!m) return std::nullopt;
        return RcuType::fresh(std::move(*m));
    }
    if (w == "rcuItr") {
        if (parts->middle.empty() && parts->braces.empty()) return RcuType::itr_bare();
        auto p = parse_path(parts->middle);
        if (!p) return std::nullopt;
        auto m = parse_fieldmap(parts->braces.empty() ? "{}" : parts->braces);
        if (!m) return std::nullopt;
        return RcuType::itr(std::move(*p), std::move(*m));
    }
    return std::nullopt;
}

const RcuType& TypeEnv::get(const std::string& var) const {
    static const RcuType undef = RcuType::undef();
    auto it = bindings.find(var);
    return it == bindings.end() ? undef : it->second;
}

std::set<std::string> TypeEnv::free_vars(const std::set<std::string>& excluding) const {
    std::set<std::string> out;
    for (const auto& [var, t] : bindings) {
        if (excluding.count(var)) continue;
        out.insert(var);
        for (const auto& v : t.fmap.var_targets()) out.insert(v);
    }
    return out;
}

std::set<std::string> TypeEnv::index_vars() const {
    std::set<std::string> out;
    for (const auto& [var, t] : bindings) {
        if (t.kind != RcuType::Kind::RcuItr) continue;
        auto vs = t.path.index_vars();
        out.insert(vs.begin(), vs.end());
    }
    return out;
}

std::string to_string(const TypeEnv& env) {
    std::string out;
    for (const auto& [var, t] : env.bindings) {
        if (!out.empty()) out += ", ";
        out += var + ": " + to_string(t);
    }
    return out;
}

std::optional<TypeEnv> parse_env(const std::string& text) {
    TypeEnv env;
    // Split on top-level commas (commas inside {...} belong to field maps).
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char ch : text) {
        if (ch == '{' || ch == '(') ++depth;
        if (ch == '}' || ch == ')') --depth;
        if (ch == ',' && depth == 0) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    for (auto& part : parts) {
        size_t colon = part.find(':');
        if (colon == std::string::npos) return std::nullopt;
        std::string var = part.substr(0, colon);
        size_t b = var.find_first_not_of(" \t");
        size_t e = var.find_last_not_of(" \t");
        if (b == std::string::npos) return std::nullopt;
        var = var.substr(b, e - b + 1);
        auto t = parse_type(part.substr(colon + 1));
        if (!t) return std::nullopt;
        if (env.has(var)) return std::nullopt;  // duplicate binding
        env.set(var, std::move(*t));
    }
    return env;
}

// ---------------------------------------------------------------------------

bool type_subtype(const RcuType& a, const RcuType& b) {
    if (a == b) return true;
    if (a.kind == RcuType::Kind::RcuItr && b.kind == RcuType::Kind::Undef) return true;
    if (a.kind == RcuType::Kind::RcuItr && b.kind == RcuType::Kind::RcuItr)
        return path_subtype(a.path, b.path) && fieldmap_subtype(a.fmap, b.fmap);
    if (a.kind == RcuType::Kind::RcuFresh && b.kind == RcuType::Kind::RcuFresh)
        return fieldmap_subtype(a.fmap, b.fmap);
    return false;
}

static bool forgettable(const RcuType& t) {
    switch (t.kind) {
        case RcuType::Kind::Undef:
        case RcuType::Kind::RcuItr:
        case RcuType::Kind::RcuItrBare:
        case RcuType::Kind::Bool:
            return true;
        default:
            return false;
    }
}

bool env_subtype(const TypeEnv& a, const TypeEnv& b) {
    for (const auto& [var, tb] : b.bindings) {
        if (!a.has(var)) {
            if (tb.kind != RcuType::Kind::Undef) return false;
            continue;
        }
        if (!type_subtype(a.get(var), tb)) return false;
    }
    for (const auto& [var, ta] : a.bindings) {
        if (b.has(var)) continue;
        if (!forgettable(ta)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

TypeEnv env_reindex(const TypeEnv& g, const std::string& index_var, const FieldSet& fields) {
    TypeEnv out = g;
    for (auto& [var, t] : out.bindings)
        if (t.kind == RcuType::Kind::RcuItr)
            t.path = reindex_path(t.path, index_var, fields);
    return out;
}

TypeEnv env_instantiate_zero(const TypeEnv& g, const std::string& index_var) {
    TypeEnv out = g;
    for (auto& [var, t] : out.bindings) {
        if (t.kind != RcuType::Kind::RcuItr) continue;
        Path p;
        for (const auto& seg : t.path.segs)
            if (!(seg.kind == PathSeg::Kind::Rep && seg.index == index_var))
                p.segs.push_back(seg);
        t.path = std::move(p);
    }
    return out;
}

static RcuType::Kind gate_kind(Gate which) {
    switch (which) {
        case Gate::NoFresh: return RcuType::Kind::RcuFresh;
        case Gate::NoUnlinked: return RcuType::Kind::Unlinked;
        case Gate::NoFreeable: return RcuType::Kind::Freeable;
    }
    return RcuType::Kind::Undef;
}

bool env_gate(const TypeEnv& g, Gate which) {
    return !env_gate_witness(g, which).has_value();
}

std::optional<std::string> env_gate_witness(const TypeEnv& g, Gate which) {
    auto k = gate_kind(which);
    for (const auto& [var, t] : g.bindings)
        if (t.kind == k) return var;
    return std::nullopt;
}

}  // namespace rcuguard
