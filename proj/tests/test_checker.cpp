#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rcuguard/checker.hpp"
#include "rcuguard/corpus.hpp"

using namespace rcuguard;

namespace {

TypeEnv env_of(const std::string& text) {
    auto e = parse_env(text);
    REQUIRE(e.has_value());
    return *e;
}

FieldTypeTable bag_fields() {
    FieldTypeTable t;
    t.kinds["Next"] = FieldKind::Rcu;
    t.kinds["data"] = FieldKind::Normal;
    return t;
}

FieldTypeTable bst_fields() {
    FieldTypeTable t;
    t.kinds["Left"] = FieldKind::Rcu;
    t.kinds["Right"] = FieldKind::Rcu;
    t.kinds["data"] = FieldKind::Normal;
    t.kinds["dir"] = FieldKind::Normal;
    return t;
}

Stmt atomic(StmtKind kind, std::string a, std::string b = "", std::string field = "") {
    Stmt s;
    s.kind = kind;
    s.var_a = std::move(a);
    s.var_b = std::move(b);
    s.field = std::move(field);
    return s;
}

Program load_program(const CorpusManifest& m, const std::string& file) {
    auto r = parse_file(m.path_of(file));
    if (!r.ok())
        for (const auto& d : r.diagnostics)
            MESSAGE(file, ":", d.pos.line, ":", d.pos.col, " ", d.message);
    REQUIRE(r.ok());
    return *r.program;
}

CorpusManifest manifest() {
    std::string err;
    auto m = load_corpus(default_corpus_dir(), &err);
    REQUIRE_MESSAGE(m.has_value(), err);
    return *m;
}

}  // namespace

TEST_CASE("T-Root gives the empty-path iterator") {
    Checker c(bag_fields());
    auto env = env_of("head: rcuRoot, par: undef");
    auto r = c.check_atomic(env, atomic(StmtKind::RootRead, "par", "head"), CheckMode::Write);
    REQUIRE(r.ok());
    CHECK(r.env->get("par") == *parse_type("rcuItr eps {}"));
    CHECK(r.env->get("head") == *parse_type("rcuRoot"));
}

TEST_CASE("T-UnlinkH on the bag remove environment") {
    Checker c(bag_fields());
    auto env = env_of(
        "par: rcuItr (Next)^k {Next -> cur}, "
        "cur: rcuItr (Next)^k.Next {Next -> curl}, "
        "curl: rcuItr (Next)^k.Next.Next {}");
    auto r = c.check_atomic(env, atomic(StmtKind::FieldWrite, "par", "curl", "Next"),
                            CheckMode::Write);
    REQUIRE_MESSAGE(r.ok(), (r.diag ? r.diag->message : std::string{}));
    CHECK(r.env->get("cur") == *parse_type("unlinked"));
    CHECK(r.env->get("par") == *parse_type("rcuItr (Next)^k {Next -> curl}"));
    CHECK(r.env->get("curl") == *parse_type("rcuItr (Next)^k.Next {}"));
}

TEST_CASE("T-Sync flips every unlinked binding; T-Free consumes freeable") {
    Checker c(bag_fields());
    auto env = env_of("z: unlinked, y: rcuItr Next {}");
    Stmt sync_pair = Stmt::seq({atomic(StmtKind::SyncStart, ""), atomic(StmtKind::SyncStop, "")});
    auto r = c.check_stmt(env, sync_pair, CheckMode::Write);
    REQUIRE(r.ok());
    CHECK(r.env->get("z") == *parse_type("freeable"));
    CHECK(r.env->get("y") == *parse_type("rcuItr Next {}"));
    for (const auto& [v, t] : r.env->bindings)
        CHECK(t.kind != RcuType::Kind::Unlinked);

    auto r2 = c.check_atomic(*r.env, atomic(StmtKind::FreeStmt, "z"), CheckMode::Write);
    REQUIRE(r2.ok());
    CHECK(r2.env->get("z") == *parse_type("undef"));

    auto r3 = c.check_stmt(env, Stmt::seq({atomic(StmtKind::SyncStart, "")}), CheckMode::Write);
    REQUIRE_FALSE(r3.ok());
    CHECK(r3.diag->rule == "T-Sync");
}

TEST_CASE("T-UnlinkH framing rejects a field-map alias of the unlinked node") {
    Checker c(bag_fields());
    auto env = env_of(
        "par: rcuItr (Next)^k {Next -> cur}, "
        "cur: rcuItr (Next)^k.Next {Next -> curl}, "
        "curl: rcuItr (Next)^k.Next.Next {}, "
        "spy: rcuItr (Next)^j {Next -> cur}");
    auto r = c.check_atomic(env, atomic(StmtKind::FieldWrite, "par", "curl", "Next"),
                            CheckMode::Write);
    REQUIRE_FALSE(r.ok());
    CHECK(r.diag->rule == "T-UnlinkH");
    CHECK(r.diag->message.find("framing") != std::string::npos);
}

TEST_CASE("T-UnlinkH requires explicit null siblings") {
    Checker c(bst_fields());
    auto env = env_of(
        "par: rcuItr (Left|Right)^k {Left -> cur}, "
        "cur: rcuItr (Left|Right)^k.Left {Left -> curL, Right -> curR}, "
        "curL: rcuItr (Left|Right)^k.Left.Left {}, "
        "curR: rcuItr (Left|Right)^k.Left.Right {}");
    auto r = c.check_atomic(env, atomic(StmtKind::FieldWrite, "par", "curL", "Left"),
                            CheckMode::Write);
    REQUIRE_FALSE(r.ok());
    CHECK(r.diag->rule == "T-UnlinkH");
    // Absence of an entry is a distinct, stricter failure.
    auto env2 = env_of(
        "par: rcuItr (Left|Right)^k {Left -> cur}, "
        "cur: rcuItr (Left|Right)^k.Left {Left -> curL}, "
        "curL: rcuItr (Left|Right)^k.Left.Left {}");
    auto r2 = c.check_atomic(env2, atomic(StmtKind::FieldWrite, "par", "curL", "Left"),
                             CheckMode::Write);
    REQUIRE_FALSE(r2.ok());
    CHECK(r2.diag->rule == "T-UnlinkH");
}

TEST_CASE("frame preservation: untouched bindings come back unchanged") {
    Checker c(bag_fields());
    auto env = env_of(
        "par: rcuItr (Next)^k {Next -> cur}, "
        "cur: rcuItr (Next)^k.Next {Next -> curl}, "
        "curl: rcuItr (Next)^k.Next.Next {}, "
        "other: rcuItr (Next)^j.Next.Next.Next {}, "
        "b: bool, head: rcuRoot");
    auto r = c.check_atomic(env, atomic(StmtKind::FieldWrite, "par", "curl", "Next"),
                            CheckMode::Write);
    REQUIRE(r.ok());
    for (const char* v : {"other", "b", "head"})
        CHECK(r.env->get(v) == env.get(v));
}

TEST_CASE("branch refinement and join reproduce the alternation figure") {
    Checker c(bst_fields());
    auto env = env_of("cur: rcuItr (Left|Right) {}, par: rcuItr eps {Left|Right -> cur}");

    Stmt then_branch = Stmt::seq({atomic(StmtKind::VarRead, "cur", "par"),
                                  atomic(StmtKind::FieldRead, "par", "cur", "Left")});
    Stmt else_branch = Stmt::seq({atomic(StmtKind::VarRead, "cur", "par"),
                                  atomic(StmtKind::FieldRead, "par", "cur", "Right")});
    Stmt iff = atomic(StmtKind::IfFieldEq, "par", "cur", "Left");
    iff.children = {then_branch, else_branch};

    auto r = c.check_stmt(env, iff, CheckMode::Write);
    REQUIRE_MESSAGE(r.ok(), (r.diag ? r.diag->message : std::string{}));
    CHECK(r.env->get("cur") ==
          *parse_type("rcuItr (Left|Right).(Left|Right) {}"));
    CHECK(r.env->get("par") ==
          *parse_type("rcuItr (Left|Right) {Left|Right -> cur}"));
}

TEST_CASE("IfBool over identical skip branches leaves the environment") {
    Checker c(bag_fields());
    auto env = env_of("b: bool, x: rcuItr Next {}");
    Stmt iff = atomic(StmtKind::IfBool, "b");
    iff.children = {atomic(StmtKind::Skip, ""), atomic(StmtKind::Skip, "")};
    auto r = c.check_stmt(env, iff, CheckMode::Write);
    REQUIRE(r.ok());
    CHECK(*r.env == env);
}

TEST_CASE("monotonicity: a more precise entry yields a result below the join") {
    Checker c(bst_fields());
    auto imprecise = env_of("cur: rcuItr (Left|Right) {}, par: rcuItr eps {Left|Right -> cur}");
    auto precise = env_of("cur: rcuItr Left {}, par: rcuItr eps {Left -> cur}");
    REQUIRE(env_subtype(precise, imprecise));

    Stmt then_branch = Stmt::seq({atomic(StmtKind::VarRead, "cur", "par"),
                                  atomic(StmtKind::FieldRead, "par", "cur", "Left")});
    Stmt else_branch = Stmt::seq({atomic(StmtKind::VarRead, "cur", "par"),
                                  atomic(StmtKind::FieldRead, "par", "cur", "Right")});
    Stmt iff = atomic(StmtKind::IfFieldEq, "par", "cur", "Left");
    iff.children = {then_branch, else_branch};

    auto from_imprecise = c.check_stmt(imprecise, iff, CheckMode::Write);
    auto from_precise = c.check_stmt(precise, iff, CheckMode::Write);
    REQUIRE(from_imprecise.ok());
    REQUIRE_MESSAGE(from_precise.ok(), (from_precise.diag ? from_precise.diag->message : std::string{}));
    CHECK(env_subtype(*from_precise.env, *from_imprecise.env));
}

TEST_CASE("read mode rejects every mutation") {
    Checker c(bag_fields());
    auto env = env_of("cur: rcuItr, itr: rcuItr");
    for (auto kind : {StmtKind::FieldWrite, StmtKind::Alloc, StmtKind::FreeStmt}) {
        auto s = atomic(kind, "cur", "itr", "Next");
        auto r = c.check_atomic(env, s, CheckMode::Read);
        REQUIRE_FALSE(r.ok());
        CHECK(r.diag->rule == "ToRCURead");
    }
    auto sync = c.check_stmt(env, Stmt::seq({atomic(StmtKind::SyncStart, "")}), CheckMode::Read);
    REQUIRE_FALSE(sync.ok());
    CHECK(sync.diag->rule == "ToRCURead");
    auto r = c.check_atomic(env, atomic(StmtKind::FieldRead, "cur", "z", "Next"),
                            CheckMode::Read);
    REQUIRE(r.ok());
    CHECK(r.env->get("z") == RcuType::itr_bare());
}

TEST_CASE("corpus positives all check") {
    auto m = manifest();
    for (const auto& c : m.positives) {
        INFO(c.name);
        auto p = load_program(m, c.file);
        auto report = check_program(p);
        if (!report.ok()) {
            const auto* d = report.first_diag();
            MESSAGE(c.name, ": ", d->rule, " at ", d->location.begin.line, ":",
                    d->location.begin.col, " ", d->message);
        }
        CHECK(report.ok());
    }
}

TEST_CASE("corpus negatives are rejected with the expected rule") {
    auto m = manifest();
    for (const auto& c : m.negatives) {
        INFO(c.name);
        auto p = load_program(m, c.file);
        auto report = check_program(p);
        REQUIRE_FALSE(report.ok());
        const auto* d = report.first_diag();
        CHECK(d->rule == c.expect_rule);
    }
}

TEST_CASE("mutations of bag remove fail on the expected rule") {
    auto m = manifest();
    auto p = load_program(m, "bag_remove.rcu");

    {
        Program mutant = p;
        auto& body = mutant.threads[0].blocks[0].body;
        std::erase_if(body.children, [](const Stmt& s) {
            return s.kind == StmtKind::SyncStart || s.kind == StmtKind::SyncStop;
        });
        auto report = check_program(mutant);
        REQUIRE_FALSE(report.ok());
        CHECK(report.first_diag()->rule == "T-Free");
    }
    {
        Program mutant = p;
        auto& body = mutant.threads[0].blocks[0].body;
        std::erase_if(body.children,
                      [](const Stmt& s) { return s.kind == StmtKind::FreeStmt; });
        auto report = check_program(mutant);
        REQUIRE_FALSE(report.ok());
        CHECK(report.first_diag()->rule == "ToRCUWrite");
        CHECK(report.first_diag()->message.find("freeable") != std::string::npos);
    }
}

TEST_CASE("bst delete goes through T-Replace and the null-sibling unlink") {
    auto m = manifest();
    auto p = load_program(m, "bst_delete_two_children.rcu");
    auto report = check_program(p);
    if (!report.ok()) {
        const auto* d = report.first_diag();
        MESSAGE(d->rule, " at ", d->location.begin.line, ":", d->location.begin.col, " ",
                d->message);
    }
    REQUIRE(report.ok());
    int replaces = 0, unlinks = 0;
    for (const auto& r : report.trace) {
        if (r.rule == "T-Replace") ++replaces;
        if (r.rule == "T-UnlinkH") ++unlinks;
    }
    CHECK(replaces == 2);  // both branches of the parent-direction check
    CHECK(unlinks == 1);   // the old successor
}

TEST_CASE("golden annotations match the computed environments") {
    auto m = manifest();
    for (const auto& c : m.positives) {
        INFO(c.name);
        auto p = load_program(m, c.file);
        auto report = check_program(p);
        REQUIRE(report.ok());
        CHECK(!report.asserts.empty());
        for (const auto& site : report.asserts) {
            auto expected = parse_env(site.expected_text);
            REQUIRE_MESSAGE(expected.has_value(), site.expected_text);
            for (const auto& [var, want] : expected->bindings) {
                INFO(c.name, " line ", site.location.begin.line, " var ", var,
                     ": computed ", to_string(site.computed.get(var)), ", golden ",
                     to_string(want));
                CHECK(site.computed.get(var) == want);
            }
        }
    }
}

TEST_CASE("T-ReadS copies the path and field map") {
    Checker c(bag_fields());
    auto env = env_of("x: rcuItr Next {Next -> w}, w: rcuItr Next.Next {}, z: undef");
    auto r = c.check_atomic(env, atomic(StmtKind::VarRead, "x", "z"), CheckMode::Write);
    REQUIRE_MESSAGE(r.ok(), (r.diag ? r.diag->message : std::string{}));
    CHECK(r.env->get("z") == env.get("x"));
    CHECK(r.env->get("x") == env.get("x"));
}

TEST_CASE("checker output is a function of environment and statement") {
    auto m = manifest();
    auto p = load_program(m, "bst_delete_two_children.rcu");
    auto a = check_program(p);
    auto b = check_program(p);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    REQUIRE(a.asserts.size() == b.asserts.size());
    for (size_t i = 0; i < a.asserts.size(); ++i)
        CHECK(a.asserts[i].computed == b.asserts[i].computed);
    REQUIRE(a.trace.size() == b.trace.size());
    for (size_t i = 0; i < a.trace.size(); ++i)
        CHECK(a.trace[i].rule == b.trace[i].rule);
}

TEST_CASE("read-mode heap guards still require iterator operands") {
    Checker c(bag_fields());
    auto env = env_of("b: bool");
    Stmt iff = atomic(StmtKind::IfFieldNull, "ghost", "", "Next");
    iff.children = {atomic(StmtKind::Skip, ""), atomic(StmtKind::Skip, "")};
    auto r = c.check_stmt(env, iff, CheckMode::Read);
    REQUIRE_FALSE(r.ok());
    CHECK(r.diag->rule == "T-Branch3");

    Stmt loop = atomic(StmtKind::WhileFieldNonNull, "ghost", "", "Next");
    loop.children = {atomic(StmtKind::Skip, "")};
    auto r2 = c.check_stmt(env, loop, CheckMode::Read);
    REQUIRE_FALSE(r2.ok());
    CHECK(r2.diag->rule == "T-Loop2");
}
