#pragma once

#include <map>
#include <optional>
#include <string>

#include "rcuguard/paths.hpp"

// RCU types and flow-sensitive type environments.
//
// Write-side critical sections use six types: rcuItr rho N (a reference
// into the shared structure, reachable via path rho, with field map N),
// rcuFresh N, unlinked, undef, freeable and rcuRoot. Read-side sections
// use rcuItr without components. Condition variables are bool.
//
// Annotation grammar:
//
//   env   ::= binding ("," binding)*
//   binding ::= var ":" type
//   type  ::= "rcuItr" path fmap | "rcuItr"
//           | "rcuFresh" fmap
//           | "unlinked" | "undef" | "freeable" | "rcuRoot" | "bool"

namespace rcuguard {

struct RcuType {
    enum class Kind {
        RcuItr,      // path + field map (write side)
        RcuItrBare,  // read side, no components
        RcuFresh,    // field map only
        Unlinked,
        Undef,
        Freeable,
        RcuRoot,
        Bool,
    };

    Kind kind = Kind::Undef;
    Path path;      // RcuItr
    FieldMap fmap;  // RcuItr, RcuFresh

    static RcuType itr(Path p, FieldMap m) { return {Kind::RcuItr, std::move(p), std::move(m)}; }
    static RcuType itr_bare() { return {Kind::RcuItrBare, {}, {}}; }
    static RcuType fresh(FieldMap m) { return {Kind::RcuFresh, {}, std::move(m)}; }
    static RcuType unlinked() { return {Kind::Unlinked, {}, {}}; }
    static RcuType undef() { return {Kind::Undef, {}, {}}; }
    static RcuType freeable() { return {Kind::Freeable, {}, {}}; }
    static RcuType root() { return {Kind::RcuRoot, {}, {}}; }
    static RcuType boolean() { return {Kind::Bool, {}, {}}; }

    bool is(Kind k) const { return kind == k; }
    // Linear types may never be silently dropped or overwritten.
    bool linear() const {
        return kind == Kind::Unlinked || kind == Kind::Freeable || kind == Kind::RcuFresh;
    }

    bool operator==(const RcuType&) const = default;
};

std::string to_string(const RcuType& t);
std::optional<RcuType> parse_type(const std::string& text);

struct TypeEnv {
    std::map<std::string, RcuType> bindings;

    // Unbound variables read as undef.
    const RcuType& get(const std::string& var) const;
    bool has(const std::string& var) const { return bindings.count(var) != 0; }
    void set(const std::string& var, RcuType t) { bindings[var] = std::move(t); }
    void erase(const std::string& var) { bindings.erase(var); }

    // Variables free in the environment excluding the listed bindings:
    // bound variables plus every variable named in a field map.
    std::set<std::string> free_vars(const std::set<std::string>& excluding = {}) const;

    // Index variables used by any rcuItr path.
    std::set<std::string> index_vars() const;

    bool operator==(const TypeEnv&) const = default;
};

std::string to_string(const TypeEnv& env);
std::optional<TypeEnv> parse_env(const std::string& text);

// ---------------------------------------------------------------------------
// Subtyping

// Derivable from componentwise rcuItr subtyping, rcuItr _ <: undef, bare
// rcuItr reflexivity and reflexivity on every constructor. No rule relates
// distinct non-rcuItr constructors.
bool type_subtype(const RcuType& a, const RcuType& b);

// dom(b) included in dom(a), pointwise subtype on shared domain; bindings
// absent from b must be forgettable (undef, or coercible to undef: rcuItr
// and bool). Linear bindings can never be dropped.
bool env_subtype(const TypeEnv& a, const TypeEnv& b);

// ---------------------------------------------------------------------------
// Reindexing and gates

TypeEnv env_reindex(const TypeEnv& g, const std::string& index_var, const FieldSet& fields);

// Substitutes zero repetitions for `index_var`: every Rep segment indexed by
// it disappears. Used to check loop-entry environments against invariants.
TypeEnv env_instantiate_zero(const TypeEnv& g, const std::string& index_var);

enum class Gate { NoFresh, NoUnlinked, NoFreeable };

bool env_gate(const TypeEnv& g, Gate which);
// Variable violating the gate, if any.
std::optional<std::string> env_gate_witness(const TypeEnv& g, Gate which);

}  // namespace rcuguard
