#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "rcuguard/paths.hpp"

// Source language for RCU programs (.rcu files).
//
//   program  := "fields" "{" name ":" ("rcu"|"normal") ["," ...] "}"
//               "root" name ";"
//               thread*
//   thread   := ("writer"|"reader") name ["*" int] "{" block* "}"
//   block    := ("rcu_write"|"rcu_read") root "." field "as" var "{" stmt* "}"
//   stmt     := var "=" var ";"                      root or variable read
//             | var "=" var "." field ";"            heap or data read
//             | var "." field "=" (var | "null") ";" heap or data write
//             | var "=" "new" ";"
//             | "free" "(" var ")" ";"
//             | "sync_start" ";" | "sync_stop" ";" | "skip" ";"
//             | "if" "(" cond ")" "{" stmt* "}" ["else" "{" stmt* "}"]
//             | "while" "(" guard ")" annot* "{" stmt* "}"
//             | "$assert" "{" env-text "}"
//   cond     := var | var "." field "==" var | var "." field "==" "null"
//   guard    := var | var "." field "!=" "null" ["&&" var]
//   annot    := "@invariant" "{" env-text "}"
//             | "@reindex" "(" index-var "," field ["|" field]* ")"
//
// Reads and writes of rcu-kind fields are heap statements; normal-kind
// fields carry opaque data. Loop annotations give the invariant environment
// and the reindexing hints applied at the loop back edge. `reader name * N`
// replicates a reader thread N times.

namespace rcuguard {

enum class FieldKind { Rcu, Normal };

struct FieldTypeTable {
    std::map<std::string, FieldKind> kinds;

    std::optional<FieldKind> kind(const std::string& field) const {
        auto it = kinds.find(field);
        if (it == kinds.end()) return std::nullopt;
        return it->second;
    }
    bool is_rcu(const std::string& field) const {
        auto k = kind(field);
        return k && *k == FieldKind::Rcu;
    }
};

struct SourcePos {
    int line = 0;
    int col = 0;
};

struct SourceSpan {
    SourcePos begin;
    SourcePos end;
};

struct LoopAnnotation {
    std::string invariant_text;  // environment source text, parsed by the checker
    std::vector<std::pair<std::string, FieldSet>> reindex;  // (index var, fields)
};

enum class StmtKind {
    RootRead,           // y = r
    VarRead,            // z = x
    FieldRead,          // z = x.f     (f rcu)
    FieldWrite,         // x.f = y | x.f = null
    Alloc,              // x = new
    FreeStmt,           // free(x)
    SyncStart,
    SyncStop,
    Skip,
    Seq,                // children
    IfBool,             // if (x)            children: then, else
    IfFieldEq,          // if (x.f1 == z)    children: then, else
    IfFieldNull,        // if (x.f == null)  children: then, else
    WhileBool,          // while (x)         children: body
    WhileFieldNonNull,  // while (x.f != null [&& flag]) children: body
    DataRead,           // v = x.f     (f normal)
    DataWrite,          // x.f = v
    AssertSite,         // $assert{env} annotation marker
};

struct Stmt {
    StmtKind kind = StmtKind::Skip;
    SourceSpan span;

    std::string var_a;   // primary variable (x, or target of reads)
    std::string var_b;   // secondary variable (y/z/r/flag operand)
    std::string field;
    bool rhs_null = false;      // FieldWrite x.f = null
    std::string flag_var;       // WhileFieldNonNull compound guard, "" if none
    std::optional<LoopAnnotation> annot;
    std::vector<Stmt> children;

    // AssertSite
    int assert_id = -1;
    std::string assert_env_text;

    static Stmt seq(std::vector<Stmt> stmts);
};

struct Block {
    bool is_write = false;
    std::string root_var;  // x in `rcu_write x.f as y`
    std::string field;
    std::string bind_var;  // y
    Stmt body;
    SourceSpan span;
};

enum class ThreadKind { Writer, Reader };

struct ThreadDecl {
    std::string name;
    ThreadKind kind = ThreadKind::Reader;
    int replicas = 1;  // `reader name * N`
    std::vector<Block> blocks;
    SourceSpan span;
};

struct Program {
    FieldTypeTable field_types;
    std::string root_var;
    std::vector<ThreadDecl> threads;

    const ThreadDecl* writer() const;
    int total_threads() const;  // replicas expanded
};

// ---------------------------------------------------------------------------

struct SyntaxDiagnostic {
    SourcePos pos;
    std::string message;
};

struct ParseOptions {
    // Write-side loops must carry an @invariant annotation.
    bool require_loop_invariants = true;
};

struct ParseResult {
    std::optional<Program> program;
    std::vector<SyntaxDiagnostic> diagnostics;

    bool ok() const { return program.has_value(); }
};

ParseResult parse(const std::string& source, const ParseOptions& opts = {});
ParseResult parse_file(const std::string& path, const ParseOptions& opts = {});

std::string pretty(const Program& p);

// Structural equality ignoring source spans and assert ids.
bool ast_equal(const Stmt& a, const Stmt& b);
bool ast_equal(const Program& a, const Program& b);

// Variables read or written by the statement, transitively.
std::set<std::string> free_vars(const Stmt& stmt);

}  // namespace rcuguard
