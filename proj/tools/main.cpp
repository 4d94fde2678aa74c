// rcuguard: type-check RCU programs against the flow-sensitive RCU type
// system, execute them under the abstract RCU semantics across bounded
// thread interleavings, and diff computed type environments against golden
// annotations.
//
// Exit codes:
//   check:    0 accepted, 1 type error, 2 usage/parse error
//   explore:  0 safe and exhausted, 1 violation found, 2 usage/parse error,
//             3 bounds exhausted without a violation
//   run:      0 safe, 1 unsafe, 2 usage/parse error, 4 schedule divergence
//   annotate: 0 (with --diff: 0 no mismatches, 1 mismatches)
//   corpus:   0 all suites pass, 1 otherwise

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rcuguard/checker.hpp"
#include "rcuguard/corpus.hpp"
#include "rcuguard/explorer.hpp"

using namespace rcuguard;
using nlohmann::json;

namespace {

bool use_color() {
    const char* c = std::getenv("RCUGUARD_COLOR");
    return !(c && std::string(c) == "0");
}

std::string paint(const std::string& s, const char* code) {
    if (!use_color()) return s;
    return std::string("\033[") + code + "m" + s + "\033[0m";
}

std::string ok_tag() { return paint("ok", "32"); }
std::string fail_tag() { return paint("FAIL", "31"); }

json diag_json(const Diagnostic& d) {
    json env = json::object();
    for (const auto& [var, t] : d.env_before.bindings) env[var] = to_string(t);
    return json{{"rule", d.rule},
                {"span", {{"line", d.location.begin.line}, {"col", d.location.begin.col}}},
                {"message", d.message},
                {"env_before", env}};
}

void print_diag(const Diagnostic& d, bool as_json) {
    if (as_json) {
        std::cout << diag_json(d).dump(2) << "\n";
        return;
    }
    std::cout << fail_tag() << " " << d.location.begin.line << ":" << d.location.begin.col
              << " [" << d.rule << "] " << d.message << "\n";
    if (!d.env_before.bindings.empty())
        std::cout << "  context: " << to_string(d.env_before) << "\n";
}

json violation_json(const ViolationRecord& v) {
    json out{{"reason", v.reason},
             {"witnesses", json::array({v.detail})},
             {"step", v.step},
             {"schedule", v.schedule}};
    if (v.reason.rfind("axiom:", 0) == 0) out["axiom"] = v.reason.substr(6);
    return out;
}

json state_json(const MachineState& ms) {
    json heap = json::object();
    for (const auto& [l, obj] : ms.heap) {
        json fields = json::object();
        for (const auto& [f, v] : obj.fields) {
            switch (v.kind) {
                case Val::Kind::Loc: fields[f] = "loc:" + std::to_string(v.num); break;
                case Val::Kind::Null: fields[f] = nullptr; break;
                case Val::Kind::Int: fields[f] = v.num; break;
                case Val::Kind::Undef: fields[f] = "undef"; break;
            }
        }
        heap[std::to_string(l)] = {{"dead", obj.dead}, {"fields", fields}};
    }
    json stack = json::array();
    for (const auto& [key, v] : ms.stack)
        stack.push_back({{"var", key.first},
                         {"tid", key.second},
                         {"value", v.is_loc() ? "loc:" + std::to_string(v.num)
                                              : v.kind == Val::Kind::Int
                                                    ? std::to_string(v.num)
                                                    : v.kind == Val::Kind::Null ? "null"
                                                                                : "undef"}});
    return json{{"lock", ms.lock},
                {"root", ms.root},
                {"readers", ms.readers},
                {"bounding", ms.bounding},
                {"heap", heap},
                {"stack", stack}};
}

struct Inputs {
    Program program;
    CompiledProgram compiled;
    HeapSeed seed;
};

// Parses the program and assembles the runtime configuration shared by the
// run/explore commands.
std::optional<Inputs> load_inputs(const std::string& file, const std::string& seed_file,
                                  int heap_nodes, std::optional<int> readers,
                                  std::string* error) {
    auto pr = parse_file(file);
    if (!pr.ok()) {
        std::ostringstream msg;
        for (const auto& d : pr.diagnostics)
            msg << file << ":" << d.pos.line << ":" << d.pos.col << ": " << d.message << "\n";
        *error = msg.str();
        return std::nullopt;
    }
    Inputs in{std::move(*pr.program), {}, {}};
    in.compiled = compile(in.program, readers);
    if (!seed_file.empty()) {
        std::ifstream f(seed_file);
        if (!f) {
            *error = "cannot open seed heap: " + seed_file;
            return std::nullopt;
        }
        std::stringstream ss;
        ss << f.rdbuf();
        auto seed = parse_heap_seed(ss.str(), error);
        if (!seed) return std::nullopt;
        in.seed = std::move(*seed);
    } else {
        in.seed = default_list_seed(in.program.field_types, heap_nodes);
    }
    return in;
}

int cmd_check(const std::string& file, bool as_json, unsigned bound) {
    auto pr = parse_file(file);
    if (!pr.ok()) {
        for (const auto& d : pr.diagnostics)
            std::cerr << file << ":" << d.pos.line << ":" << d.pos.col << ": " << d.message
                      << "\n";
        return 2;
    }
    CheckOptions opts;
    opts.mayalias_bound = bound;
    auto report = check_program(*pr.program, opts);
    if (as_json) {
        json out;
        out["ok"] = report.ok();
        out["threads"] = json::array();
        for (const auto& t : report.threads) {
            json jt{{"thread", t.thread}, {"ok", t.ok()}};
            if (t.diag) jt["diagnostic"] = diag_json(*t.diag);
            out["threads"].push_back(std::move(jt));
        }
        std::cout << out.dump(2) << "\n";
    } else {
        for (const auto& t : report.threads) {
            if (t.ok()) {
                std::cout << ok_tag() << " thread " << t.thread << "\n";
            } else {
                std::cout << "thread " << t.thread << ": ";
                print_diag(*t.diag, false);
            }
        }
    }
    return report.ok() ? 0 : 1;
}

int cmd_annotate(const std::string& file, bool diff, const std::string& golden_file,
                 bool as_json, unsigned bound) {
    auto pr = parse_file(file);
    if (!pr.ok()) {
        for (const auto& d : pr.diagnostics)
            std::cerr << file << ":" << d.pos.line << ":" << d.pos.col << ": " << d.message
                      << "\n";
        return 2;
    }
    CheckOptions opts;
    opts.mayalias_bound = bound;
    auto report = check_program(*pr.program, opts);
    if (!report.ok()) {
        std::cerr << "type checking failed; annotations are incomplete\n";
        print_diag(*report.first_diag(), as_json);
        return 1;
    }

    // Expected environments: inline from the $assert sites, or one line per
    // site from the golden file.
    std::vector<std::string> expected;
    for (const auto& site : report.asserts) expected.push_back(site.expected_text);
    if (!golden_file.empty()) {
        std::ifstream f(golden_file);
        if (!f) {
            std::cerr << "cannot open golden file: " << golden_file << "\n";
            return 2;
        }
        expected.clear();
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            expected.push_back(line);
        }
        if (expected.size() != report.asserts.size()) {
            std::cerr << "site-count mismatch: golden has " << expected.size()
                      << " sites, program has " << report.asserts.size() << "\n";
            return diff ? 1 : 2;
        }
    }

    int mismatches = 0;
    json sites = json::array();
    for (size_t i = 0; i < report.asserts.size(); ++i) {
        const auto& site = report.asserts[i];
        json js{{"id", site.id},
                {"line", site.location.begin.line},
                {"computed", to_string(site.computed)}};
        if (!as_json)
            std::cout << "site " << site.id << " (line " << site.location.begin.line
                      << "): " << to_string(site.computed) << "\n";
        if (diff) {
            auto want = parse_env(expected[i]);
            if (!want) {
                std::cerr << "malformed golden environment at site " << site.id << "\n";
                return 2;
            }
            json bad = json::array();
            for (const auto& [var, t] : want->bindings) {
                if (site.computed.get(var) == t) continue;
                ++mismatches;
                bad.push_back({{"var", var},
                               {"golden", to_string(t)},
                               {"computed", to_string(site.computed.get(var))}});
                if (!as_json)
                    std::cout << "  mismatch " << var << ": golden " << to_string(t)
                              << ", computed " << to_string(site.computed.get(var)) << "\n";
            }
            js["mismatches"] = std::move(bad);
        }
        sites.push_back(std::move(js));
    }
    if (as_json)
        std::cout << json{{"sites", sites}, {"mismatches", mismatches}}.dump(2) << "\n";
    else if (diff)
        std::cout << (mismatches == 0 ? ok_tag() : fail_tag()) << " " << mismatches
                  << " mismatches over " << report.asserts.size() << " sites\n";
    return diff && mismatches > 0 ? 1 : 0;
}

int cmd_explore(const std::string& file, const std::string& seed_file, int heap_nodes,
                int readers, int max_steps, int max_heap, bool unsafe, bool no_dedup,
                int sample, bool as_json, unsigned bound) {
    std::string err;
    auto in = load_inputs(file, seed_file, heap_nodes, readers, &err);
    if (!in) {
        std::cerr << err;
        return 2;
    }
    if (!unsafe) {
        CheckOptions copts;
        copts.mayalias_bound = bound;
        auto report = check_program(in->program, copts);
        if (!report.ok()) {
            std::cerr << "program rejected by the checker (use --unsafe to explore anyway)\n";
            print_diag(*report.first_diag(), as_json);
            return 1;
        }
    }
    ExploreBounds bounds;
    bounds.max_steps = max_steps;
    bounds.max_heap_nodes = max_heap;
    bounds.reader_count = readers;
    bounds.dedup = !no_dedup;
    ExploreOptions opts;
    opts.check_axioms_every = sample;
    auto rep = explore(in->compiled, in->seed, bounds, opts);

    if (as_json) {
        json out{{"states_explored", rep.states_explored},
                 {"schedules_completed", rep.schedules_completed},
                 {"dedup_hits", rep.dedup_hits},
                 {"exhausted", rep.exhausted},
                 {"violations", json::array()}};
        for (const auto& v : rep.violations) out["violations"].push_back(violation_json(v));
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << "states explored:     " << rep.states_explored << "\n"
                  << "schedules completed: " << rep.schedules_completed << "\n"
                  << "exhausted:           " << (rep.exhausted ? "yes" : "no") << "\n";
        for (const auto& v : rep.violations) {
            std::cout << fail_tag() << " " << v.reason << " at step " << v.step << " ("
                      << v.detail << ")\n  schedule:";
            for (ThreadId t : v.schedule) std::cout << " " << t;
            std::cout << "\n";
        }
        if (rep.violations.empty())
            std::cout << ok_tag() << " no faults, no axiom violations\n";
    }
    if (!rep.violations.empty()) return 1;
    return rep.exhausted ? 0 : 3;
}

int cmd_run(const std::string& file, const std::string& sched_file,
            const std::string& seed_file, int heap_nodes, int readers, bool unsafe,
            bool as_json, unsigned bound) {
    std::string err;
    auto in = load_inputs(file, seed_file, heap_nodes, readers, &err);
    if (!in) {
        std::cerr << err;
        return 2;
    }
    if (!unsafe) {
        CheckOptions copts;
        copts.mayalias_bound = bound;
        auto report = check_program(in->program, copts);
        if (!report.ok()) {
            std::cerr << "program rejected by the checker (use --unsafe to run anyway)\n";
            print_diag(*report.first_diag(), as_json);
            return 1;
        }
    }
    std::ifstream f(sched_file);
    if (!f) {
        std::cerr << "cannot open schedule: " << sched_file << "\n";
        return 2;
    }
    std::vector<ThreadId> schedule;
    std::string tok;
    while (f >> tok) {
        if (tok[0] == '#') {
            std::getline(f, tok);
            continue;
        }
        schedule.push_back(std::stoi(tok));
    }
    auto rr = replay(in->compiled, in->seed, schedule);
    if (as_json) {
        json out{{"safe", rr.verdict.safe}, {"reasons", rr.verdict.reasons},
                 {"trace", json::array()},
                 {"final_state", state_json(rr.final_state)}};
        for (const auto& t : rr.trace)
            out["trace"].push_back(
                {{"step", t.step}, {"tid", t.tid}, {"rule", t.rule}, {"hash", t.state_hash}});
        if (rr.divergence) out["divergence"] = *rr.divergence;
        std::cout << out.dump(2) << "\n";
    } else {
        for (const auto& t : rr.trace)
            std::cout << "<" << t.step << ", " << t.tid << ", " << t.rule << ", "
                      << t.state_hash << ">\n";
        if (rr.divergence)
            std::cout << fail_tag() << " divergence at step " << *rr.divergence << ": "
                      << rr.error << "\n";
        std::cout << (rr.verdict.safe ? ok_tag() + " safe" : fail_tag() + " unsafe");
        for (const auto& r : rr.verdict.reasons) std::cout << " " << r;
        std::cout << "\n";
    }
    if (rr.divergence) return 4;
    return rr.verdict.safe ? 0 : 1;
}

struct SuiteCounter {
    int passed = 0;
    int failed = 0;

    void note(const std::string& what, bool ok, const std::string& detail = "") {
        std::cout << (ok ? ok_tag() : fail_tag()) << " " << what;
        if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        (ok ? passed : failed) += 1;
    }
};

HeapSeed load_seed(const CorpusManifest& m, const CorpusCase& c) {
    std::ifstream f(m.path_of(c.seed_heap));
    std::stringstream ss;
    ss << f.rdbuf();
    std::string err;
    auto seed = parse_heap_seed(ss.str(), &err);
    return seed ? *seed : HeapSeed{};
}

int cmd_corpus(const std::string& dir, unsigned bound) {
    std::string err;
    auto m = load_corpus(dir.empty() ? default_corpus_dir() : dir, &err);
    if (!m) {
        std::cerr << err << "\n";
        return 2;
    }
    SuiteCounter suite;
    CheckOptions copts;
    copts.mayalias_bound = bound;

    std::cout << "== positive suite ==\n";
    for (const auto& c : m->positives) {
        auto pr = parse_file(m->path_of(c.file));
        if (!pr.ok()) {
            suite.note(c.name + ": parse", false);
            continue;
        }
        auto report = check_program(*pr.program, copts);
        suite.note(c.name + ": checker accepts", report.ok(),
                   report.ok() ? "" : report.first_diag()->message);
        if (!report.ok()) continue;
        int mismatches = 0;
        for (const auto& site : report.asserts) {
            auto want = parse_env(site.expected_text);
            if (!want) {
                ++mismatches;
                continue;
            }
            for (const auto& [var, t] : want->bindings)
                if (!(site.computed.get(var) == t)) ++mismatches;
        }
        suite.note(c.name + ": golden annotations", mismatches == 0,
                   std::to_string(mismatches) + " mismatches");
    }

    std::cout << "== negative suite ==\n";
    for (const auto& c : m->negatives) {
        auto pr = parse_file(m->path_of(c.file));
        if (!pr.ok()) {
            suite.note(c.name + ": parse", false);
            continue;
        }
        auto report = check_program(*pr.program, copts);
        bool rejected = !report.ok();
        std::string rule = rejected ? report.first_diag()->rule : "accepted";
        suite.note(c.name + ": rejected via " + c.expect_rule, rejected && rule == c.expect_rule,
                   "got " + rule);
    }

    std::cout << "== differential suite ==\n";
    for (const auto& c : m->positives) {
        auto pr = parse_file(m->path_of(c.file));
        if (!pr.ok()) continue;
        auto prog = compile(*pr.program, c.readers);
        ExploreBounds b;
        b.max_steps = c.max_steps;
        b.max_heap_nodes = c.max_heap;
        b.reader_count = c.readers;
        auto rep = explore(prog, load_seed(*m, c), b);
        suite.note(c.name + ": safe and exhausted", rep.violations.empty() && rep.exhausted,
                   rep.violations.empty() ? "not exhausted"
                                          : rep.violations.front().reason);
    }
    for (const auto& c : m->negatives) {
        if (!c.dynamic) {
            std::cout << "   - " << c.name << ": static-only (leak), no dynamic half\n";
            continue;
        }
        auto pr = parse_file(m->path_of(c.file));
        if (!pr.ok()) continue;
        auto prog = compile(*pr.program, c.readers);
        ExploreBounds b;
        b.max_steps = c.max_steps;
        b.max_heap_nodes = c.max_heap;
        b.reader_count = c.readers;
        auto seed = load_seed(*m, c);
        auto rep = explore(prog, seed, b);
        suite.note(c.name + ": violation found under --unsafe", !rep.violations.empty());
        if (rep.violations.empty()) continue;
        const auto& v = rep.violations.front();
        auto rr = replay(prog, seed, v.schedule);
        bool reproduced =
            !rr.verdict.safe &&
            std::find(rr.verdict.reasons.begin(), rr.verdict.reasons.end(), v.reason) !=
                rr.verdict.reasons.end();
        suite.note(c.name + ": replay reproduces " + v.reason, reproduced);
    }

    std::cout << suite.passed << " passed, " << suite.failed << " failed\n";
    return suite.failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"checker and bounded explorer for RCU programs"};
    app.require_subcommand(1);

    unsigned bound = kDefaultMayAliasBound;
    app.add_option("--mayalias-bound", bound, "index-variable enumeration bound")
        ->capture_default_str();

    std::string file, seed_file, sched_file, golden_file, corpus_dir;
    bool as_json = false, unsafe = false, diff = false, no_dedup = false;
    int readers = 2, max_steps = 40, heap_nodes = 3, max_heap = 8, sample = 1;

    auto* check = app.add_subcommand("check", "type-check a program");
    check->add_option("file", file)->required();
    check->add_flag("--json", as_json);

    auto* run = app.add_subcommand("run", "replay a recorded schedule");
    run->add_option("file", file)->required();
    run->add_option("--schedule", sched_file, "whitespace-separated thread ids")->required();
    run->add_option("--seed-heap", seed_file);
    run->add_option("--heap", heap_nodes, "default list seed size");
    run->add_option("--readers", readers);
    run->add_flag("--unsafe", unsafe, "skip the checker");
    run->add_flag("--json", as_json);

    auto* explore_cmd = app.add_subcommand("explore", "bounded exhaustive interleaving search");
    explore_cmd->add_option("file", file)->required();
    explore_cmd->add_option("--seed-heap", seed_file);
    explore_cmd->add_option("--heap", heap_nodes, "default list seed size");
    explore_cmd->add_option("--readers", readers)->capture_default_str();
    explore_cmd->add_option("--max-steps", max_steps)->capture_default_str();
    explore_cmd->add_option("--max-heap-nodes", max_heap)->capture_default_str();
    explore_cmd->add_option("--sample", sample, "check axioms every N steps")
        ->capture_default_str();
    explore_cmd->add_flag("--unsafe", unsafe, "explore even if the checker rejects");
    explore_cmd->add_flag("--no-dedup", no_dedup);
    explore_cmd->add_flag("--json", as_json);

    auto* annotate = app.add_subcommand("annotate", "print computed environments at $assert sites");
    annotate->add_option("file", file)->required();
    annotate->add_flag("--diff", diff, "compare against golden annotations");
    annotate->add_option("--golden", golden_file, "external golden file (one env per line)");
    annotate->add_flag("--json", as_json);

    auto* corpus_cmd = app.add_subcommand("corpus", "run the corpus suites");
    corpus_cmd->add_option("--dir", corpus_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (check->parsed()) return cmd_check(file, as_json, bound);
    if (run->parsed())
        return cmd_run(file, sched_file, seed_file, heap_nodes, readers, unsafe, as_json, bound);
    if (explore_cmd->parsed())
        return cmd_explore(file, seed_file, heap_nodes, readers, max_steps, max_heap, unsafe,
                           no_dedup, sample, as_json, bound);
    if (annotate->parsed()) return cmd_annotate(file, diff, golden_file, as_json, bound);
    if (corpus_cmd->parsed()) return cmd_corpus(corpus_dir, bound);
    return 2;
}
