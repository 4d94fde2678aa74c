#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rcuguard/lang.hpp"
#include "rcuguard/types.hpp"

// Flow-sensitive type checker for RCU programs.
//
// Write-side critical sections are checked under the flow-sensitive
// judgment: atomic statements have per-rule transfer functions (T-Root,
// T-ReadS, T-ReadH, T-Alloc, T-Free, T-WriteFH, T-Sync, T-UnlinkH,
// T-Replace, T-Insert, T-LinkF-Null), control flow refines and joins
// environments (T-Branch1/2/3, T-Loop1/2, T-ReIndex, T-Conseq), and
// critical-section entry/exit enforce the NoFresh/NoUnlinked/NoFreeable
// gates (ToRCUWrite). Read-side sections use component-free rcuItr types
// and reject every mutation (ToRCURead).

namespace rcuguard {

enum class CheckMode { Write, Read };

struct Diagnostic {
    std::string rule;  // type-rule label, or "artifact" for plumbing errors
    SourceSpan location;
    std::string message;
    TypeEnv env_before;
};

struct CheckOptions {
    unsigned mayalias_bound = kDefaultMayAliasBound;
};

// Computed environment at a $assert{...} site.
struct AssertObservation {
    int id = -1;
    SourceSpan location;
    TypeEnv computed;
    std::string expected_text;  // the site's inline annotation, verbatim
};

struct AppliedRule {
    SourceSpan location;
    std::string rule;
};

struct StmtResult {
    std::optional<TypeEnv> env;
    std::optional<Diagnostic> diag;

    bool ok() const { return env.has_value(); }
    static StmtResult of(TypeEnv e) { return {std::move(e), std::nullopt}; }
    static StmtResult error(Diagnostic d) { return {std::nullopt, std::move(d)}; }
};

class Checker {
  public:
    Checker(FieldTypeTable fields, CheckOptions opts = {})
        : fields_(std::move(fields)), opts_(opts) {}

    // Transfer function for one atomic statement (not Seq/If/While).
    StmtResult check_atomic(const TypeEnv& env, const Stmt& stmt, CheckMode mode);

    // Full statement checking with control flow.
    StmtResult check_stmt(const TypeEnv& env, const Stmt& stmt, CheckMode mode);

    // One critical section, from an environment holding only rcuRoot and
    // normal/bool variables. Enforces the post-block gates for write blocks.
    StmtResult check_block(const TypeEnv& env0, const Block& block);

    const std::vector<AssertObservation>& asserts() const { return asserts_; }
    const std::vector<AppliedRule>& trace() const { return trace_; }

  private:
    StmtResult check_seq(const TypeEnv& env, const std::vector<Stmt>& stmts, CheckMode mode);
    StmtResult check_field_write(const TypeEnv& env, const Stmt& s);
    StmtResult check_if(const TypeEnv& env, const Stmt& s, CheckMode mode);
    StmtResult check_while(const TypeEnv& env, const Stmt& s, CheckMode mode);
    StmtResult join_envs(const TypeEnv& a, const TypeEnv& b, const Stmt& at, CheckMode mode);

    Diagnostic diag(const std::string& rule, const Stmt& at, std::string msg,
                    const TypeEnv& env) const;
    void record(const Stmt& at, const std::string& rule);

    FieldTypeTable fields_;
    CheckOptions opts_;
    std::vector<AssertObservation> asserts_;
    std::vector<AppliedRule> trace_;
};

struct ThreadReport {
    std::string thread;
    std::optional<Diagnostic> diag;
    bool ok() const { return !diag.has_value(); }
};

struct CheckReport {
    std::vector<ThreadReport> threads;
    std::vector<AssertObservation> asserts;
    std::vector<AppliedRule> trace;

    bool ok() const {
        for (const auto& t : threads)
            if (!t.ok()) return false;
        return true;
    }
    const Diagnostic* first_diag() const {
        for (const auto& t : threads)
            if (t.diag) return &*t.diag;
        return nullptr;
    }
};

// Checks every thread of the program; contexts are per-thread, sharing only
// the rcuRoot binding.
CheckReport check_program(const Program& p, CheckOptions opts = {});

}  // namespace rcuguard
