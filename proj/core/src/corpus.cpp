#include "rcuguard/corpus.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace rcuguard {

namespace {

CorpusCase case_from_json(const nlohmann::json& j) {
    CorpusCase c;
    c.name = j.at("name").get<std::string>();
    c.file = j.at("file").get<std::string>();
    c.seed_heap = j.value("seed_heap", std::string{});
    c.readers = j.value("readers", 2);
    c.max_steps = j.value("max_steps", 40);
    c.max_heap = j.value("max_heap", 8);
    c.expect_rule = j.value("expect_rule", std::string{});
    c.dynamic = j.value("dynamic", false);
    return c;
}

}  // namespace

std::optional<CorpusManifest> load_corpus(const std::string& dir, std::string* error) {
    auto fail = [&](const std::string& msg) {
        if (error) *error = msg;
        return std::nullopt;
    };
    std::ifstream in(dir + "/manifest.json");
    if (!in) return fail("cannot open " + dir + "/manifest.json");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        return fail(std::string("manifest parse error: ") + e.what());
    }
    CorpusManifest m;
    m.dir = dir;
    try {
        for (const auto& c : j.at("positives")) m.positives.push_back(case_from_json(c));
        for (const auto& c : j.at("negatives")) m.negatives.push_back(case_from_json(c));
    } catch (const std::exception& e) {
        return fail(std::string("manifest schema error: ") + e.what());
    }
    return m;
}

std::string default_corpus_dir() {
    if (const char* env = std::getenv("RCUGUARD_CORPUS")) return env;
#ifdef RCUGUARD_CORPUS_DIR
    if (std::filesystem::exists(RCUGUARD_CORPUS_DIR)) return RCUGUARD_CORPUS_DIR;
#endif
    return "corpus";
}

}  // namespace rcuguard
