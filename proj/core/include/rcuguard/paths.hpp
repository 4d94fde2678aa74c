#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

// Abstract heap paths and field maps.
//
// A path describes how a node is reached from the root of the structure:
// a dot-separated sequence of segments, where a segment is a single field
// (`Next`), an alternation over fields (`(Left|Right)`), or an indexed
// repetition (`(Next)^k`). Index variables are existentially quantified
// naturals; the same variable denotes the same natural everywhere it
// occurs within one type environment.
//
// Textual grammar (also used inside type annotations):
//
//   path    ::= "eps" | seg ("." seg)*
//   seg     ::= name
//             | "(" name ("|" name)* ")" ( "^" name )?
//             | name "^" name
//
// `(f)^k` repeats a choice among the alternation set k times; each
// repetition step is an independent choice (regular-language semantics).

namespace rcuguard {

using FieldSet = std::set<std::string>;

struct PathSeg {
    enum class Kind { Concrete, Alt, Rep };
    Kind kind = Kind::Concrete;
    FieldSet fields;    // Concrete: exactly 1, Alt: >= 2, Rep: >= 1
    std::string index;  // Rep only

    static PathSeg concrete(std::string f);
    static PathSeg alt(FieldSet fs);
    static PathSeg rep(FieldSet fs, std::string index_var);

    bool operator==(const PathSeg&) const = default;
    auto operator<=>(const PathSeg&) const = default;
};

struct Path {
    std::vector<PathSeg> segs;  // empty = eps

    bool empty() const { return segs.empty(); }
    bool operator==(const Path&) const = default;
    auto operator<=>(const Path&) const = default;

    Path append(const PathSeg& s) const;
    // All index variables occurring in Rep segments.
    std::set<std::string> index_vars() const;
};

std::string to_string(const PathSeg& seg);
std::string to_string(const Path& p);

// Parses the textual path grammar; returns nullopt on malformed input.
std::optional<Path> parse_path(const std::string& text);

// ---------------------------------------------------------------------------
// Concretization (the brute-force oracle behind MayAlias)

struct ConcretizeResult {
    std::set<std::vector<std::string>> sequences;
    bool overflow = false;  // some expansion exceeded `depth` and was dropped
};

// Expands every Alt to one member and every Rep(F,k) to assignment(k)
// members of F. Requires an assignment for every Rep index in the path.
ConcretizeResult concretize(const Path& p,
                            const std::map<std::string, unsigned>& assignment,
                            unsigned depth);

// ---------------------------------------------------------------------------
// MayAlias
//
// Conservative: false only when the two paths can never concretize to the
// same field sequence. Enumerates all assignments of index variables in
// 0..bound (shared variables get a single consistent value), then extends
// the disequality beyond the bound with an affine-length argument: each
// path's concrete length is an affine function of its index variables; if
// the two length expressions can never be equal over the naturals the
// paths stay disjoint for every assignment.

bool may_alias(const Path& a, const Path& b, unsigned bound);
bool may_alias(const Path& a, std::span<const Path> bs, unsigned bound);

inline constexpr unsigned kDefaultMayAliasBound = 3;

// ---------------------------------------------------------------------------
// Path subtyping: b is obtainable from a by widening Concrete segments into
// alternations that contain them (plus reflexivity). Rep segments must match
// exactly, including the index variable.

bool path_subtype(const Path& a, const Path& b);

// Reindexing: contracts each occurrence of a segment pair
// <Rep(S,k), X> with fields(X) included in S and in `fields` down to the
// bare <Rep(S,k)>. Contractions do not cascade: the segment following a
// contracted pair is kept even if it would form the pattern again.
Path reindex_path(const Path& p, const std::string& index_var, const FieldSet& fields);

// ---------------------------------------------------------------------------
// Field maps: which local variables alias which fields of a referent.
// Keys are either a single field or an alternation of fields; keys are
// pairwise disjoint as field sets. Targets are a variable or null.

struct FieldTarget {
    enum class Kind { Var, Null };
    Kind kind = Kind::Null;
    std::string var;

    static FieldTarget null() { return {}; }
    static FieldTarget of(std::string v) { return {Kind::Var, std::move(v)}; }
    bool is_null() const { return kind == Kind::Null; }

    bool operator==(const FieldTarget&) const = default;
    auto operator<=>(const FieldTarget&) const = default;
};

struct FieldMap {
    // Sorted by key for canonical form; keys disjoint.
    std::vector<std::pair<FieldSet, FieldTarget>> entries;

    bool empty() const { return entries.empty(); }
    bool operator==(const FieldMap&) const = default;
    auto operator<=>(const FieldMap&) const = default;

    // Entry whose key contains `field`, if any.
    const std::pair<FieldSet, FieldTarget>* lookup(const std::string& field) const;
    // Entry with exactly this key.
    const FieldTarget* lookup_exact(const FieldSet& key) const;

    // Inserts or replaces the entry keyed by exactly `key`. Fails (returns
    // false) if `key` overlaps a different existing key.
    bool set(const FieldSet& key, FieldTarget target);
    void erase_containing(const std::string& field);

    std::set<std::string> var_targets() const;
};

std::string to_string(const FieldMap& m);
std::optional<FieldMap> parse_fieldmap(const std::string& text);

// b arises from a by deleting entries, widening a key to an alternation
// containing it (target unchanged), or reflexivity. Maps with fewer
// entries are supertypes; the empty map is above everything.
bool fieldmap_subtype(const FieldMap& a, const FieldMap& b);

}  // namespace rcuguard
