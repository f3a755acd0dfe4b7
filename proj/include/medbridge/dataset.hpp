#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "medbridge/metrics.hpp"

namespace medbridge {

struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class SvoSystem { TCM, WM };

std::string to_string(SvoSystem s);

// One of the four benchmark classes: {TCM, WM} x {aligned, misaligned}.
struct SvoClass {
    SvoSystem system;
    Verdict label;

    bool operator==(const SvoClass&) const = default;
    auto operator<=>(const SvoClass&) const = default;
};

std::string to_string(const SvoClass& c);  // e.g. "TCM/aligned"

inline constexpr std::array<SvoClass, 4> kSvoClasses = {
    SvoClass{SvoSystem::TCM, Verdict::Aligned}, SvoClass{SvoSystem::TCM, Verdict::Misaligned},
    SvoClass{SvoSystem::WM, Verdict::Aligned}, SvoClass{SvoSystem::WM, Verdict::Misaligned}};

struct SVOSentence {
    std::string id;
    std::string text_zh;
    std::string text_en;
    std::string subject;
    std::string verb;
    std::string object;
    SvoSystem system = SvoSystem::TCM;
    Verdict label = Verdict::Aligned;

    SvoClass svo_class() const { return {system, label}; }
    bool operator==(const SVOSentence&) const = default;
};

struct DatasetManifest {
    std::vector<SVOSentence> sentences;
    std::map<std::string, long> declared_counts;  // keyed by to_string(SvoClass)

    std::map<std::string, long> actual_counts() const;
};

// Validated load: schema violations carry line numbers; declared counts (if
// present) are cross-checked against actual per-class counts.
DatasetManifest load_dataset(const std::string& path);

void save_dataset(const DatasetManifest& manifest, const std::string& path);

// Reason-annotated removal list from one screening stage (the expert stages
// are data, not algorithms).
struct RemovalList {
    std::string reason;
    std::vector<std::string> terms;
};

struct ScreenResult {
    std::vector<std::string> kept;
    std::vector<std::pair<std::string, std::string>> removed;  // (term, reason)
};

// Normalized de-duplication plus the supplied expert removals;
// kept + removed partition the input.
ScreenResult screen_terms(const std::vector<std::string>& raw_terms,
                          const std::vector<RemovalList>& expert_removals);

// Per-class largest-remainder allocation, seed-keyed shuffle before the cut.
// Deterministic for a fixed seed; per-class test share within one sentence
// of test_fraction * class size.
std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& manifest,
                                                             double test_fraction,
                                                             std::uint64_t seed);

}  // namespace medbridge
