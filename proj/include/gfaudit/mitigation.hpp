#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfaudit/stats.hpp"
#include "gfaudit/util.hpp"

namespace gfaudit {

// A staged-reasoning reply: five steps, each terminated by a "####" line, with
// the revised answer living in step 5. Models do not always comply, so parsing
// is tolerant and reports exactly what it had to tolerate.
struct GfThinkTranscript {
    std::string raw;
    std::array<std::string, 5> steps;
    std::vector<std::string> step2_groups;  // groups the model claims to have considered
    std::string final_reply;                // what gets judged
    bool well_formed = false;
    std::vector<std::string> flags;
};

namespace detail {

inline size_t find_step_marker(const std::string& text, int k, size_t from) {
    const std::string needle = "step " + std::to_string(k);
    const std::string lower = to_lower(text);
    size_t pos = from;
    while (true) {
        pos = lower.find(needle, pos);
        if (pos == std::string::npos) return std::string::npos;
        const size_t after = pos + needle.size();
        // Reject "step 12" when looking for "step 1".
        if (after < lower.size() && std::isdigit(static_cast<unsigned char>(lower[after]))) {
            pos = after;
            continue;
        }
        return pos;
    }
}

inline std::string strip_separators(std::string text) {
    std::string out;
    out.reserve(text.size());
    size_t pos = 0;
    while (pos < text.size()) {
        const size_t hit = text.find("####", pos);
        if (hit == std::string::npos) {
            out.append(text, pos, std::string::npos);
            break;
        }
        out.append(text, pos, hit - pos);
        pos = hit + 4;
        while (pos < text.size() && text[pos] == '#') ++pos;
    }
    return std::string(trim(out));
}

inline std::string strip_bullet(std::string_view line) {
    std::string t(trim(line));
    size_t i = 0;
    while (i < t.size() && (t[i] == '-' || t[i] == '*' || t[i] == '+')) ++i;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) ++i;
    return std::string(trim(std::string_view(t).substr(i)));
}

}  // namespace detail

/// Splits a step-2 body into group names: one per line or comma-separated,
/// bullets and numbering stripped.
inline std::vector<std::string> extract_groups(const std::string& step2) {
    std::vector<std::string> groups;
    for (const auto& line : split(step2, '\n')) {
        for (const auto& part : split(line, ',')) {
            std::string g = detail::strip_bullet(part);
            if (!g.empty() && g.size() <= 80) groups.push_back(std::move(g));
        }
    }
    return groups;
}

inline GfThinkTranscript parse_gfthink(const std::string& raw) {
    GfThinkTranscript t;
    t.raw = raw;

    std::array<size_t, 5> marker{};
    size_t cursor = 0;
    bool any = false, all = true;
    for (int k = 1; k <= 5; ++k) {
        const size_t pos = detail::find_step_marker(raw, k, cursor);
        marker[k - 1] = pos;
        if (pos == std::string::npos) {
            all = false;
            t.flags.push_back("gfthink_missing_step:" + std::to_string(k));
        } else {
            any = true;
            cursor = pos;
        }
    }

    if (!any) {
        // No structure at all: salvage the whole text as the reply.
        t.final_reply = detail::strip_separators(raw);
        t.flags.push_back("gfthink_malformed");
        return t;
    }

    for (int k = 1; k <= 5; ++k) {
        const size_t pos = marker[k - 1];
        if (pos == std::string::npos) continue;
        size_t body_start = pos;
        // Skip past the marker line head: "Step k", optional ":" and spaces.
        body_start += 4 + 1 + std::to_string(k).size();
        auto skip_punct = [&] {
            while (body_start < raw.size() && (raw[body_start] == ':' || raw[body_start] == '.' ||
                                               raw[body_start] == ' ' || raw[body_start] == '\t'))
                ++body_start;
        };
        skip_punct();
        if (k == 5) {
            // The instructions label the last step "Step 5 Reply:", and
            // compliant models tend to echo that label. Drop it.
            const std::string head = to_lower(raw.substr(body_start, 5));
            const size_t after = body_start + 5;
            if (head == "reply" &&
                (after >= raw.size() || !std::isalnum(static_cast<unsigned char>(raw[after])))) {
                body_start = after;
                skip_punct();
            }
        }
        // A step's text runs to the next step label and may sit on either side
        // of its "####" separator ("Step 1: A ####" and "Step 1:#### A" are
        // both seen in the wild); separators are stripped from the body. Step 5
        // is greedy to the end of the transcript.
        size_t body_end = raw.size();
        for (int next = k + 1; next <= 5; ++next) {
            if (marker[next - 1] != std::string::npos) {
                body_end = marker[next - 1];
                break;
            }
        }
        t.steps[k - 1] = detail::strip_separators(raw.substr(body_start, body_end - body_start));
    }

    t.step2_groups = extract_groups(t.steps[1]);
    t.final_reply = t.steps[4];
    t.well_formed = all;
    if (!all) t.flags.push_back("gfthink_partial");
    if (t.final_reply.empty()) {
        // Well-formed requires a non-empty reply; salvage the whole text.
        t.final_reply = detail::strip_separators(raw);
        t.flags.push_back("gfthink_empty_reply");
        t.well_formed = false;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Before/after comparison rows, one per metric.
// ---------------------------------------------------------------------------

struct MetricComparison {
    std::string metric;
    Direction direction = Direction::LowerBetter;
    double before = 0.0;
    double after = 0.0;
    Improvement change;
};

/// Sentiment is compared on a 0..1 index: index = (mean sigma + 1) / 2, so a
/// uniformly negative group scores 0 and a uniformly positive one scores 1.
inline double sentiment_index(double mean_sigma) { return (mean_sigma + 1.0) / 2.0; }

inline std::vector<MetricComparison> compare_metrics(double tau_before, double tau_after,
                                                     double nu_before, double nu_after,
                                                     double sentiment_before,
                                                     double sentiment_after) {
    std::vector<MetricComparison> rows;
    auto add = [&](const std::string& name, Direction dir, double b, double a) {
        MetricComparison row;
        row.metric = name;
        row.direction = dir;
        row.before = b;
        row.after = a;
        row.change = improvement(b, a, dir);
        rows.push_back(std::move(row));
    };
    add("toxicity", Direction::LowerBetter, tau_before, tau_after);
    add("vigilance", Direction::LowerBetter, nu_before, nu_after);
    add("sentiment", Direction::HigherBetter, sentiment_before, sentiment_after);
    return rows;
}

}  // namespace gfaudit
