#pragma once

#include <optional>
#include <string>
#include <vector>

// Corpus manifest: the positive programs with golden annotations and the
// negative programs paired with their expected diagnostic rule and, for
// the dynamic ones, an explorer violation under --unsafe.

namespace rcuguard {

struct CorpusCase {
    std::string name;
    std::string file;       // relative to the corpus directory
    std::string seed_heap;  // relative path to the heap seed
    int readers = 2;
    int max_steps = 40;
    int max_heap = 8;
    // Negatives only.
    std::string expect_rule;
    bool dynamic = false;
};

struct CorpusManifest {
    std::string dir;
    std::vector<CorpusCase> positives;
    std::vector<CorpusCase> negatives;

    std::string path_of(const std::string& rel) const { return dir + "/" + rel; }
};

std::optional<CorpusManifest> load_corpus(const std::string& dir, std::string* error);

// Default corpus directory: $RCUGUARD_CORPUS, the build-time source path,
// or ./corpus, whichever exists first.
std::string default_corpus_dir();

}  // namespace rcuguard
