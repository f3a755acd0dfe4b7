#include "medbridge/metrics.hpp"

#include <charconv>
#include <stdexcept>

namespace medbridge {

Verdict verdict_from_string(const std::string& s) {
    if (s == "aligned") return Verdict::Aligned;
    if (s == "misaligned") return Verdict::Misaligned;
    throw MetricsError("unknown verdict '" + s + "'");
}

std::string to_string(Verdict v) { return v == Verdict::Aligned ? "aligned" : "misaligned"; }

Confusion confusion_from(const std::vector<Verdict>& predictions,
                         const std::vector<Verdict>& labels) {
    if (predictions.size() != labels.size())
        throw MetricsError("length mismatch: " + std::to_string(predictions.size()) +
                           " predictions vs " + std::to_string(labels.size()) + " labels");
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred_pos = predictions[i] == Verdict::Aligned;
        const bool label_pos = labels[i] == Verdict::Aligned;
        if (pred_pos && label_pos) ++c.tp;
        else if (pred_pos && !label_pos) ++c.fp;
        else if (!pred_pos && label_pos) ++c.fn;
        else ++c.tn;
    }
    return c;
}

MetricsReport compute_metrics(const Confusion& c) {
    if (c.total() < 1) throw MetricsError("empty confusion matrix");
    MetricsReport r;
    r.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fn > 0) {
        r.recall = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    } else {
        r.degenerate.push_back("recall");
    }
    if (c.tp + c.fp > 0) {
        r.precision = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    } else {
        r.degenerate.push_back("precision");
    }
    if (r.precision + r.recall > 0.0) {
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    } else {
        r.degenerate.push_back("f1");
    }
    return r;
}

namespace {

std::string fixed2(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    if (ec != std::errc()) return "0.00";
    return std::string(buf, ptr);
}

const char* kWideColumns[] = {"LLM_Models",        "Familiarity",  "Emotional Valence",
                              "Emotional Arousal", "Semantic Accuracy", "Accuracy(%)",
                              "Recall(%)",         "F1-score(%)"};
const char* kNarrowColumns[] = {"LLM_Models", "Accuracy(%)", "Recall(%)", "F1-score(%)"};

std::vector<std::string> row_cells(const MetricsReport& r, bool wide) {
    std::vector<std::string> cells;
    cells.push_back(r.model);
    if (wide) {
        if (r.rated) {
            cells.push_back(fixed2(r.rated->familiarity));
            cells.push_back(fixed2(r.rated->emotional_valence));
            cells.push_back(fixed2(r.rated->emotional_arousal));
            cells.push_back(fixed2(r.rated->semantic_accuracy));
        } else {
            cells.insert(cells.end(), 4, "");
        }
    }
    cells.push_back(fixed2(r.accuracy));
    cells.push_back(fixed2(r.recall));
    cells.push_back(fixed2(r.f1));
    return cells;
}

}  // namespace

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format) {
    if (reports.empty()) throw MetricsError("nothing to render");
    bool wide = false;
    long abstentions = 0;
    for (const auto& r : reports) {
        if (r.rated) wide = true;
        abstentions += r.abstentions;
    }
    std::vector<std::string> header;
    if (wide)
        header.assign(std::begin(kWideColumns), std::end(kWideColumns));
    else
        header.assign(std::begin(kNarrowColumns), std::end(kNarrowColumns));

    std::string out;
    if (format == ReportFormat::Csv) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out += ',';
            out += header[i];
        }
        out += '\n';
        for (const auto& r : reports) {
            const auto cells = row_cells(r, wide);
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        }
        return out;
    }

    out += '|';
    for (const auto& h : header) {
        out += ' ';
        out += h;
        out += " |";
    }
    out += "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out += " --- |";
    out += '\n';
    for (const auto& r : reports) {
        const auto cells = row_cells(r, wide);
        out += '|';
        for (const auto& c : cells) {
            out += ' ';
            out += c;
            out += " |";
        }
        out += '\n';
    }
    if (abstentions > 0) {
        out += "\nAbstentions: ";
        out += std::to_string(abstentions);
        out += " (excluded from the confusion counts)\n";
    }
    return out;
}

double implied_precision(double recall, double f1) {
    const double denom = 2.0 * recall - f1;
    if (denom <= 0.0) throw MetricsError("F1 inversion undefined: 2R <= F1");
    return f1 * recall / denom;
}

}  // namespace medbridge
