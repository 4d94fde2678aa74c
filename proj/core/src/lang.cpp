#include "rcuguard/lang.hpp"

#include <cassert>
#include <fstream>
#include <sstream>

namespace rcuguard {

Stmt Stmt::seq(std::vector<Stmt> stmts) {
    if (stmts.size() == 1) return std::move(stmts.front());
    Stmt s;
    s.kind = StmtKind::Seq;
    if (!stmts.empty()) {
        s.span.begin = stmts.front().span.begin;
        s.span.end = stmts.back().span.end;
    }
    s.children = std::move(stmts);
    return s;
}

const ThreadDecl* Program::writer() const {
    for (const auto& t : threads)
        if (t.kind == ThreadKind::Writer) return &t;
    return nullptr;
}

int Program::total_threads() const {
    int n = 0;
    for (const auto& t : threads) n += t.replicas;
    return n;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok {
    Ident, Int, LBrace, RBrace, LParen, RParen, Semi, Comma, Colon, Dot,
    Assign, EqEq, NotEq, AndAnd, Pipe, Star, AssertBody, AtInvariant, AtReindex,
    End, Error,
};

struct Token {
    Tok kind = Tok::End;
    std::string text;
    SourcePos pos;
};

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& cur() const { return cur_; }

    void advance() {
        skip_trivia();
        cur_.pos = pos();
        if (i_ >= src_.size()) {
            cur_ = {Tok::End, "", pos()};
            return;
        }
        char c = src_[i_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = i_;
            while (i_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
                bump();
            cur_.kind = Tok::Ident;
            cur_.text = src_.substr(start, i_ - start);
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t start = i_;
            while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) bump();
            cur_.kind = Tok::Int;
            cur_.text = src_.substr(start, i_ - start);
            return;
        }
        if (c == '$') {
            // $assert{...}: capture the brace contents verbatim.
            if (src_.compare(i_, 8, "$assert{") == 0) {
                for (int n = 0; n < 8; ++n) bump();
                cur_.kind = Tok::AssertBody;
                cur_.text = take_balanced_braces();
                return;
            }
            error_here("unexpected '$'");
            return;
        }
        if (c == '@') {
            if (src_.compare(i_, 11, "@invariant{") == 0) {
                for (int n = 0; n < 11; ++n) bump();
                cur_.kind = Tok::AtInvariant;
                cur_.text = take_balanced_braces();
                return;
            }
            if (src_.compare(i_, 8, "@reindex") == 0) {
                for (int n = 0; n < 8; ++n) bump();
                cur_.kind = Tok::AtReindex;
                cur_.text = "";
                return;
            }
            error_here("unknown annotation");
            return;
        }
        auto two = [&](const char* t) { return src_.compare(i_, 2, t) == 0; };
        if (two("==")) { bump(); bump(); cur_.kind = Tok::EqEq; return; }
        if (two("!=")) { bump(); bump(); cur_.kind = Tok::NotEq; return; }
        if (two("&&")) { bump(); bump(); cur_.kind = Tok::AndAnd; return; }
        bump();
        switch (c) {
            case '{': cur_.kind = Tok::LBrace; return;
            case '}': cur_.kind = Tok::RBrace; return;
            case '(': cur_.kind = Tok::LParen; return;
            case ')': cur_.kind = Tok::RParen; return;
            case ';': cur_.kind = Tok::Semi; return;
            case ',': cur_.kind = Tok::Comma; return;
            case ':': cur_.kind = Tok::Colon; return;
            case '.': cur_.kind = Tok::Dot; return;
            case '=': cur_.kind = Tok::Assign; return;
            case '|': cur_.kind = Tok::Pipe; return;
            case '*': cur_.kind = Tok::Star; return;
            default:
                cur_.kind = Tok::Error;
                cur_.text = std::string("unexpected character '") + c + "'";
                return;
        }
    }

    SourcePos pos() const { return {line_, col_}; }

  private:
    void bump() {
        if (i_ < src_.size()) {
            if (src_[i_] == '\n') {
                ++line_;
                col_ = 1;
            } else {
                ++col_;
            }
            ++i_;
        }
    }

    void skip_trivia() {
        while (i_ < src_.size()) {
            char c = src_[i_];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                bump();
            } else if (c == '/' && i_ + 1 < src_.size() && src_[i_ + 1] == '/') {
                while (i_ < src_.size() && src_[i_] != '\n') bump();
            } else {
                break;
            }
        }
    }

    std::string take_balanced_braces() {
        // Opening brace already consumed.
        std::string out;
        int depth = 1;
        while (i_ < src_.size()) {
            char c = src_[i_];
            if (c == '{') ++depth;
            if (c == '}') {
                --depth;
                if (depth == 0) {
                    bump();
                    return out;
                }
            }
            out += c;
            bump();
        }
        cur_.kind = Tok::Error;
        cur_.text = "unterminated block";
        return out;
    }

    void error_here(std::string msg) {
        cur_.kind = Tok::Error;
        cur_.text = std::move(msg);
    }

    const std::string& src_;
    size_t i_ = 0;
    int line_ = 1;
    int col_ = 1;
    Token cur_;
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
  public:
    Parser(const std::string& src, const ParseOptions& opts) : lex_(src), opts_(opts) {}

    ParseResult run() {
        Program p;
        parse_fields(p);
        parse_root(p);
        while (!failed_ && lex_.cur().kind != Tok::End) parse_thread(p);
        validate(p);
        ParseResult r;
        r.diagnostics = std::move(diags_);
        if (r.diagnostics.empty()) r.program = std::move(p);
        return r;
    }

  private:
    [[nodiscard]] bool expect(Tok k, const std::string& what) {
        if (lex_.cur().kind == Tok::Error) {
            fail(lex_.cur().text);
            return false;
        }
        if (lex_.cur().kind != k) {
            fail("expected " + what);
            return false;
        }
        lex_.advance();
        return true;
    }

    std::optional<std::string> expect_ident(const std::string& what) {
        if (lex_.cur().kind != Tok::Ident) {
            fail("expected " + what);
            return std::nullopt;
        }
        std::string t = lex_.cur().text;
        lex_.advance();
        return t;
    }

    bool eat_keyword(const char* kw) {
        if (lex_.cur().kind == Tok::Ident && lex_.cur().text == kw) {
            lex_.advance();
            return true;
        }
        return false;
    }

    void fail(std::string msg) {
        if (failed_) return;
        failed_ = true;
        diags_.push_back({lex_.cur().pos, std::move(msg)});
    }

    void report(SourcePos pos, std::string msg) {
        diags_.push_back({pos, std::move(msg)});
    }

    void parse_fields(Program& p) {
        if (!eat_keyword("fields")) return fail("expected 'fields' declaration");
        if (!expect(Tok::LBrace, "'{'")) return;
        while (true) {
            auto name = expect_ident("field name");
            if (!name) return;
            if (!expect(Tok::Colon, "':'")) return;
            auto kind = expect_ident("field kind 'rcu' or 'normal'");
            if (!kind) return;
            if (*kind != "rcu" && *kind != "normal") return fail("unknown field kind '" + *kind + "'");
            if (p.field_types.kinds.count(*name)) return fail("duplicate field '" + *name + "'");
            p.field_types.kinds[*name] = (*kind == "rcu") ? FieldKind::Rcu : FieldKind::Normal;
            if (lex_.cur().kind == Tok::Comma) {
                lex_.advance();
                continue;
            }
            break;
        }
        (void)expect(Tok::RBrace, "'}'");
    }

    void parse_root(Program& p) {
        if (failed_) return;
        if (!eat_keyword("root")) return fail("expected 'root' declaration");
        auto name = expect_ident("root variable");
        if (!name) return;
        p.root_var = *name;
        (void)expect(Tok::Semi, "';'");
    }

    void parse_thread(Program& p) {
        ThreadDecl t;
        t.span.begin = lex_.cur().pos;
        if (eat_keyword("writer")) {
            t.kind = ThreadKind::Writer;
        } else if (eat_keyword("reader")) {
            t.kind = ThreadKind::Reader;
        } else {
            return fail("expected 'writer' or 'reader'");
        }
        auto name = expect_ident("thread name");
        if (!name) return;
        t.name = *name;
        if (lex_.cur().kind == Tok::Star) {
            lex_.advance();
            if (lex_.cur().kind != Tok::Int) return fail("expected replica count");
            t.replicas = std::stoi(lex_.cur().text);
            lex_.advance();
        }
        if (!expect(Tok::LBrace, "'{'")) return;
        while (!failed_ && lex_.cur().kind != Tok::RBrace) {
            auto b = parse_block(p, t.kind);
            if (failed_) return;
            t.blocks.push_back(std::move(b));
        }
        if (!expect(Tok::RBrace, "'}'")) return;
        t.span.end = lex_.cur().pos;
        p.threads.push_back(std::move(t));
    }

    Block parse_block(Program& p, ThreadKind tk) {
        Block b;
        b.span.begin = lex_.cur().pos;
        if (eat_keyword("rcu_write")) {
            b.is_write = true;
        } else if (eat_keyword("rcu_read")) {
            b.is_write = false;
        } else {
            fail("expected 'rcu_write' or 'rcu_read' block");
            return b;
        }
        if (tk == ThreadKind::Writer && !b.is_write)
            report(b.span.begin, "writer threads contain only rcu_write blocks");
        if (tk == ThreadKind::Reader && b.is_write)
            report(b.span.begin, "reader threads contain only rcu_read blocks");
        auto x = expect_ident("root variable");
        if (!x) return b;
        b.root_var = *x;
        if (!expect(Tok::Dot, "'.'")) return b;
        auto f = expect_ident("field");
        if (!f) return b;
        b.field = *f;
        if (!eat_keyword("as")) {
            fail("expected 'as'");
            return b;
        }
        auto y = expect_ident("bound variable");
        if (!y) return b;
        b.bind_var = *y;
        if (!expect(Tok::LBrace, "'{'")) return b;
        b.body = parse_stmts(p, b.is_write);
        (void)expect(Tok::RBrace, "'}'");
        b.span.end = lex_.cur().pos;
        return b;
    }

    Stmt parse_stmts(Program& p, bool write_side) {
        std::vector<Stmt> list;
        while (!failed_ && lex_.cur().kind != Tok::RBrace && lex_.cur().kind != Tok::End)
            list.push_back(parse_stmt(p, write_side));
        if (list.empty()) {
            Stmt s;
            s.kind = StmtKind::Skip;
            s.span = {lex_.cur().pos, lex_.cur().pos};
            return s;
        }
        return Stmt::seq(std::move(list));
    }

    Stmt parse_stmt(Program& p, bool write_side) {
        Stmt s;
        s.span.begin = lex_.cur().pos;
        auto finish = [&]() {
            s.span.end = lex_.cur().pos;
            return s;
        };

        if (lex_.cur().kind == Tok::AssertBody) {
            s.kind = StmtKind::AssertSite;
            s.assert_env_text = lex_.cur().text;
            s.assert_id = next_assert_id_++;
            lex_.advance();
            return finish();
        }
        if (lex_.cur().kind == Tok::Error) {
            fail(lex_.cur().text);
            return finish();
        }
        if (eat_keyword("skip")) {
            s.kind = StmtKind::Skip;
            (void)expect(Tok::Semi, "';'");
            return finish();
        }
        if (eat_keyword("sync_start")) {
            s.kind = StmtKind::SyncStart;
            (void)expect(Tok::Semi, "';'");
            return finish();
        }
        if (eat_keyword("sync_stop")) {
            s.kind = StmtKind::SyncStop;
            (void)expect(Tok::Semi, "';'");
            return finish();
        }
        if (eat_keyword("free")) {
            s.kind = StmtKind::FreeStmt;
            if (!expect(Tok::LParen, "'('")) return finish();
            auto x = expect_ident("variable");
            if (!x) return finish();
            s.var_a = *x;
            if (!expect(Tok::RParen, "')'")) return finish();
            (void)expect(Tok::Semi, "';'");
            return finish();
        }
        if (eat_keyword("if")) return parse_if(p, write_side, std::move(s));
        if (eat_keyword("while")) return parse_while(p, write_side, std::move(s));

        // Assignment forms.
        auto lhs = expect_ident("statement");
        if (!lhs) return finish();
        if (lex_.cur().kind == Tok::Dot) {
            lex_.advance();
            auto f = expect_ident("field");
            if (!f) return finish();
            if (!expect(Tok::Assign, "'='")) return finish();
            s.var_a = *lhs;
            s.field = *f;
            bool rcu = classify_field(p, *f, s.span.begin);
            if (eat_keyword("null")) {
                if (!rcu) report(s.span.begin, "null written to normal field '" + *f + "'");
                s.kind = StmtKind::FieldWrite;
                s.rhs_null = true;
            } else {
                auto rhs = expect_ident("right-hand side");
                if (!rhs) return finish();
                s.var_b = *rhs;
                s.kind = rcu ? StmtKind::FieldWrite : StmtKind::DataWrite;
            }
            (void)expect(Tok::Semi, "';'");
            return finish();
        }
        if (!expect(Tok::Assign, "'='")) return finish();
        if (eat_keyword("new")) {
            s.kind = StmtKind::Alloc;
            s.var_a = *lhs;
            (void)expect(Tok::Semi, "';'");
            return finish();
        }
        auto rhs = expect_ident("right-hand side");
        if (!rhs) return finish();
        if (lex_.cur().kind == Tok::Dot) {
            lex_.advance();
            auto f = expect_ident("field");
            if (!f) return finish();
            bool rcu = classify_field(p, *f, s.span.begin);
            s.kind = rcu ? StmtKind::FieldRead : StmtKind::DataRead;
            s.var_a = *rhs;  // x in z = x.f
            s.var_b = *lhs;  // z
            s.field = *f;
        } else if (*rhs == p.root_var) {
            s.kind = StmtKind::RootRead;
            s.var_a = *lhs;  // y
            s.var_b = *rhs;  // r
        } else {
            s.kind = StmtKind::VarRead;
            s.var_a = *rhs;  // x
            s.var_b = *lhs;  // z
        }
        (void)expect(Tok::Semi, "';'");
        return finish();
    }

    Stmt parse_if(Program& p, bool write_side, Stmt s) {
        if (!expect(Tok::LParen, "'('")) return s;
        auto x = expect_ident("condition variable");
        if (!x) return s;
        if (lex_.cur().kind == Tok::Dot) {
            lex_.advance();
            auto f = expect_ident("field");
            if (!f) return s;
            if (!expect(Tok::EqEq, "'=='")) return s;
            s.var_a = *x;
            s.field = *f;
            if (eat_keyword("null")) {
                s.kind = StmtKind::IfFieldNull;
            } else {
                auto z = expect_ident("variable or null");
                if (!z) return s;
                s.kind = StmtKind::IfFieldEq;
                s.var_b = *z;
            }
        } else {
            s.kind = StmtKind::IfBool;
            s.var_a = *x;
        }
        if (!expect(Tok::RParen, "')'")) return s;
        if (!expect(Tok::LBrace, "'{'")) return s;
        Stmt then_branch = parse_stmts(p, write_side);
        if (!expect(Tok::RBrace, "'}'")) return s;
        Stmt else_branch;
        else_branch.kind = StmtKind::Skip;
        else_branch.span = {lex_.cur().pos, lex_.cur().pos};
        if (eat_keyword("else")) {
            if (!expect(Tok::LBrace, "'{'")) return s;
            else_branch = parse_stmts(p, write_side);
            if (!expect(Tok::RBrace, "'}'")) return s;
        }
        s.children.push_back(std::move(then_branch));
        s.children.push_back(std::move(else_branch));
        s.span.end = lex_.cur().pos;
        return s;
    }

    Stmt parse_while(Program& p, bool write_side, Stmt s) {
        if (!expect(Tok::LParen, "'('")) return s;
        auto x = expect_ident("guard");
        if (!x) return s;
        if (lex_.cur().kind == Tok::Dot) {
            lex_.advance();
            auto f = expect_ident("field");
            if (!f) return s;
            if (!expect(Tok::NotEq, "'!='")) return s;
            if (!eat_keyword("null")) {
                fail("expected 'null'");
                return s;
            }
            s.kind = StmtKind::WhileFieldNonNull;
            s.var_a = *x;
            s.field = *f;
            if (lex_.cur().kind == Tok::AndAnd) {
                lex_.advance();
                auto flag = expect_ident("guard flag variable");
                if (!flag) return s;
                s.flag_var = *flag;
            }
        } else {
            s.kind = StmtKind::WhileBool;
            s.var_a = *x;
        }
        if (!expect(Tok::RParen, "')'")) return s;
        // Annotations.
        while (true) {
            if (lex_.cur().kind == Tok::AtInvariant) {
                if (!s.annot) s.annot.emplace();
                s.annot->invariant_text = lex_.cur().text;
                lex_.advance();
                continue;
            }
            if (lex_.cur().kind == Tok::AtReindex) {
                lex_.advance();
                if (!expect(Tok::LParen, "'('")) return s;
                auto k = expect_ident("index variable");
                if (!k) return s;
                if (!expect(Tok::Comma, "','")) return s;
                FieldSet fs;
                auto f0 = expect_ident("field");
                if (!f0) return s;
                fs.insert(*f0);
                while (lex_.cur().kind == Tok::Pipe) {
                    lex_.advance();
                    auto fn = expect_ident("field");
                    if (!fn) return s;
                    fs.insert(*fn);
                }
                if (!expect(Tok::RParen, "')'")) return s;
                if (!s.annot) s.annot.emplace();
                s.annot->reindex.emplace_back(*k, std::move(fs));
                continue;
            }
            break;
        }
        if (write_side && opts_.require_loop_invariants && !s.annot)
            report(s.span.begin, "loop missing invariant annotation");
        if (!expect(Tok::LBrace, "'{'")) return s;
        s.children.push_back(parse_stmts(p, write_side));
        (void)expect(Tok::RBrace, "'}'");
        s.span.end = lex_.cur().pos;
        return s;
    }

    bool classify_field(Program& p, const std::string& f, SourcePos pos) {
        auto k = p.field_types.kind(f);
        if (!k) {
            report(pos, "unknown field '" + f + "'");
            return true;
        }
        return *k == FieldKind::Rcu;
    }

    void validate(Program& p) {
        if (!diags_.empty()) return;
        std::set<std::string> names;
        int writers = 0;
        for (const auto& t : p.threads) {
            if (!names.insert(t.name).second)
                report(t.span.begin, "duplicate thread name '" + t.name + "'");
            if (t.kind == ThreadKind::Writer) {
                writers += t.replicas;
                if (t.replicas != 1)
                    report(t.span.begin, "writer threads cannot be replicated");
            }
            for (const auto& b : t.blocks) {
                if (b.root_var != p.root_var)
                    report(b.span.begin, "critical section must open on the root variable");
                if (!p.field_types.is_rcu(b.field))
                    report(b.span.begin, "critical section field must have kind rcu");
                check_root_not_written(p, b.body);
            }
        }
        if (writers > 1)
            report({}, "at most one writer thread per program");
    }

    void check_root_not_written(const Program& p, const Stmt& s) {
        bool writes_root = false;
        switch (s.kind) {
            case StmtKind::RootRead:
                writes_root = (s.var_a == p.root_var);
                break;
            case StmtKind::VarRead:
            case StmtKind::FieldRead:
            case StmtKind::DataRead:
                writes_root = (s.var_b == p.root_var);
                break;
            case StmtKind::Alloc:
                writes_root = (s.var_a == p.root_var);
                break;
            default:
                break;
        }
        if (writes_root)
            report(s.span.begin, "root variable cannot be assigned");
        for (const auto& c : s.children) check_root_not_written(p, c);
    }

    Lexer lex_;
    ParseOptions opts_;
    std::vector<SyntaxDiagnostic> diags_;
    bool failed_ = false;
    int next_assert_id_ = 0;
};

}  // namespace

ParseResult parse(const std::string& source, const ParseOptions& opts) {
    Parser parser(source, opts);
    return parser.run();
}

ParseResult parse_file(const std::string& path, const ParseOptions& opts) {
    std::ifstream in(path);
    if (!in) {
        ParseResult r;
        r.diagnostics.push_back({{}, "cannot open file: " + path});
        return r;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), opts);
}

// ---------------------------------------------------------------------------
// Pretty printer

namespace {

class Printer {
  public:
    std::string run(const Program& p) {
        out_ << "fields { ";
        bool first = true;
        for (const auto& [name, kind] : p.field_types.kinds) {
            if (!first) out_ << ", ";
            first = false;
            out_ << name << ": " << (kind == FieldKind::Rcu ? "rcu" : "normal");
        }
        out_ << " }\n";
        out_ << "root " << p.root_var << ";\n";
        for (const auto& t : p.threads) {
            out_ << "\n" << (t.kind == ThreadKind::Writer ? "writer " : "reader ") << t.name;
            if (t.replicas != 1) out_ << " * " << t.replicas;
            out_ << " {\n";
            indent_ = 1;
            for (const auto& b : t.blocks) {
                pad();
                out_ << (b.is_write ? "rcu_write " : "rcu_read ") << b.root_var << "."
                     << b.field << " as " << b.bind_var << " {\n";
                ++indent_;
                stmt(b.body);
                --indent_;
                pad();
                out_ << "}\n";
            }
            out_ << "}\n";
        }
        return out_.str();
    }

  private:
    void pad() {
        for (int i = 0; i < indent_; ++i) out_ << "  ";
    }

    void stmt(const Stmt& s) {
        switch (s.kind) {
            case StmtKind::Seq:
                for (const auto& c : s.children) stmt(c);
                return;
            case StmtKind::Skip:
                pad();
                out_ << "skip;\n";
                return;
            case StmtKind::SyncStart:
                pad();
                out_ << "sync_start;\n";
                return;
            case StmtKind::SyncStop:
                pad();
                out_ << "sync_stop;\n";
                return;
            case StmtKind::FreeStmt:
                pad();
                out_ << "free(" << s.var_a << ");\n";
                return;
            case StmtKind::Alloc:
                pad();
                out_ << s.var_a << " = new;\n";
                return;
            case StmtKind::RootRead:
                pad();
                out_ << s.var_a << " = " << s.var_b << ";\n";
                return;
            case StmtKind::VarRead:
                pad();
                out_ << s.var_b << " = " << s.var_a << ";\n";
                return;
            case StmtKind::FieldRead:
            case StmtKind::DataRead:
                pad();
                out_ << s.var_b << " = " << s.var_a << "." << s.field << ";\n";
                return;
            case StmtKind::FieldWrite:
                pad();
                out_ << s.var_a << "." << s.field << " = "
                     << (s.rhs_null ? "null" : s.var_b) << ";\n";
                return;
            case StmtKind::DataWrite:
                pad();
                out_ << s.var_a << "." << s.field << " = " << s.var_b << ";\n";
                return;
            case StmtKind::AssertSite:
                pad();
                out_ << "$assert{" << s.assert_env_text << "}\n";
                return;
            case StmtKind::IfBool:
            case StmtKind::IfFieldEq:
            case StmtKind::IfFieldNull: {
                pad();
                out_ << "if (";
                if (s.kind == StmtKind::IfBool)
                    out_ << s.var_a;
                else if (s.kind == StmtKind::IfFieldEq)
                    out_ << s.var_a << "." << s.field << " == " << s.var_b;
                else
                    out_ << s.var_a << "." << s.field << " == null";
                out_ << ") {\n";
                ++indent_;
                stmt(s.children[0]);
                --indent_;
                pad();
                bool trivial_else =
                    s.children[1].kind == StmtKind::Skip && s.children[1].children.empty();
                if (trivial_else) {
                    out_ << "}\n";
                } else {
                    out_ << "} else {\n";
                    ++indent_;
                    stmt(s.children[1]);
                    --indent_;
                    pad();
                    out_ << "}\n";
                }
                return;
            }
            case StmtKind::WhileBool:
            case StmtKind::WhileFieldNonNull: {
                pad();
                out_ << "while (";
                if (s.kind == StmtKind::WhileBool) {
                    out_ << s.var_a;
                } else {
                    out_ << s.var_a << "." << s.field << " != null";
                    if (!s.flag_var.empty()) out_ << " && " << s.flag_var;
                }
                out_ << ")";
                if (s.annot) {
                    if (!s.annot->invariant_text.empty())
                        out_ << " @invariant{" << s.annot->invariant_text << "}";
                    for (const auto& [k, fs] : s.annot->reindex) {
                        out_ << " @reindex(" << k << ", ";
                        bool first = true;
                        for (const auto& f : fs) {
                            if (!first) out_ << "|";
                            first = false;
                            out_ << f;
                        }
                        out_ << ")";
                    }
                }
                out_ << " {\n";
                ++indent_;
                stmt(s.children[0]);
                --indent_;
                pad();
                out_ << "}\n";
                return;
            }
        }
    }

    std::ostringstream out_;
    int indent_ = 0;
};

}  // namespace

std::string pretty(const Program& p) {
    Printer printer;
    return printer.run(p);
}

// ---------------------------------------------------------------------------

bool ast_equal(const Stmt& a, const Stmt& b) {
    if (a.kind != b.kind || a.var_a != b.var_a || a.var_b != b.var_b ||
        a.field != b.field || a.rhs_null != b.rhs_null || a.flag_var != b.flag_var ||
        a.assert_env_text != b.assert_env_text)
        return false;
    if (a.annot.has_value() != b.annot.has_value()) return false;
    if (a.annot &&
        (a.annot->invariant_text != b.annot->invariant_text || a.annot->reindex != b.annot->reindex))
        return false;
    // A skip wrapped in an empty Seq is the same statement.
    auto flat = [](const Stmt& s) {
        std::vector<const Stmt*> out;
        if (s.kind == StmtKind::Seq)
            for (const auto& c : s.children) out.push_back(&c);
        else
            out.push_back(&s);
        return out;
    };
    if (a.kind == StmtKind::Seq || b.kind == StmtKind::Seq) {
        auto fa = flat(a), fb = flat(b);
        if (fa.size() != fb.size()) return false;
        for (size_t i = 0; i < fa.size(); ++i)
            if (!ast_equal(*fa[i], *fb[i])) return false;
        return true;
    }
    if (a.children.size() != b.children.size()) return false;
    for (size_t i = 0; i < a.children.size(); ++i)
        if (!ast_equal(a.children[i], b.children[i])) return false;
    return true;
}

bool ast_equal(const Program& a, const Program& b) {
    if (a.field_types.kinds != b.field_types.kinds || a.root_var != b.root_var) return false;
    if (a.threads.size() != b.threads.size()) return false;
    for (size_t i = 0; i < a.threads.size(); ++i) {
        const auto& ta = a.threads[i];
        const auto& tb = b.threads[i];
        if (ta.name != tb.name || ta.kind != tb.kind || ta.replicas != tb.replicas) return false;
        if (ta.blocks.size() != tb.blocks.size()) return false;
        for (size_t j = 0; j < ta.blocks.size(); ++j) {
            const auto& ba = ta.blocks[j];
            const auto& bb = tb.blocks[j];
            if (ba.is_write != bb.is_write || ba.root_var != bb.root_var ||
                ba.field != bb.field || ba.bind_var != bb.bind_var)
                return false;
            if (!ast_equal(ba.body, bb.body)) return false;
        }
    }
    return true;
}

std::set<std::string> free_vars(const Stmt& stmt) {
    std::set<std::string> out;
    auto walk = [&](auto&& self, const Stmt& s) -> void {
        switch (s.kind) {
            case StmtKind::RootRead:
            case StmtKind::VarRead:
            case StmtKind::FieldRead:
            case StmtKind::DataRead:
                out.insert(s.var_a);
                out.insert(s.var_b);
                break;
            case StmtKind::FieldWrite:
            case StmtKind::DataWrite:
                out.insert(s.var_a);
                if (!s.rhs_null) out.insert(s.var_b);
                break;
            case StmtKind::Alloc:
            case StmtKind::FreeStmt:
                out.insert(s.var_a);
                break;
            case StmtKind::IfBool:
                out.insert(s.var_a);
                break;
            case StmtKind::IfFieldEq:
                out.insert(s.var_a);
                out.insert(s.var_b);
                break;
            case StmtKind::IfFieldNull:
                out.insert(s.var_a);
                break;
            case StmtKind::WhileBool:
                out.insert(s.var_a);
                break;
            case StmtKind::WhileFieldNonNull:
                out.insert(s.var_a);
                if (!s.flag_var.empty()) out.insert(s.flag_var);
                break;
            case StmtKind::SyncStart:
            case StmtKind::SyncStop:
            case StmtKind::Skip:
            case StmtKind::Seq:
            case StmtKind::AssertSite:
                break;
        }
        for (const auto& c : s.children) self(self, c);
    };
    walk(walk, stmt);
    return out;
}

}  // namespace rcuguard
