#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace medbridge {

enum class Verdict { Aligned, Misaligned };

Verdict verdict_from_string(const std::string& s);
std::string to_string(Verdict v);

struct Confusion {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;

    long total() const { return tp + fp + fn + tn; }
};

// Rated dimensions from the perceptual evaluation protocol; pass-through
// values on a 0-10 scale, never computed here.
struct RatedDimensions {
    double familiarity = 0.0;
    double emotional_valence = 0.0;
    double emotional_arousal = 0.0;
    double semantic_accuracy = 0.0;
};

struct MetricsReport {
    std::string model;
    double accuracy = 0.0;   // percentages
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    std::vector<std::string> degenerate;  // metrics whose denominator was zero
    std::optional<RatedDimensions> rated;
    long abstentions = 0;
};

struct MetricsError : std::runtime_error {
    explicit MetricsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Positive class is `aligned`. Sequences must be equal length and aligned
// element-wise.
Confusion confusion_from(const std::vector<Verdict>& predictions,
                         const std::vector<Verdict>& labels);

// Accuracy/Recall/Precision/F1 as percentages; zero denominators yield 0
// plus a degenerate flag instead of an error.
MetricsReport compute_metrics(const Confusion& c);

enum class ReportFormat { Markdown, Csv };

// Tabular rendering: the wide schema (rated dimensions first) when any
// report carries them, otherwise the narrow Accuracy/Recall/F1 schema.
// Two-decimal fixed-point, locale-independent.
std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format);

// Precision implied by the F1 identity: P = F1*R / (2R - F1).
double implied_precision(double recall, double f1);

}  // namespace medbridge
