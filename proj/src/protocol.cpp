#include "ragkit/protocol.hpp"

#include <array>

#include "ragkit/backend.hpp"
#include "ragkit/util.hpp"

namespace ragkit::protocol {

const Dialect& angle_tag() {
    static const Dialect d{
        DialectKind::AngleTag, "angle",
        "<think>", "</think>",
        "<search>", "</search>",
        "<information>", "</information>",
        "<answer>", "</answer>",
    };
    return d;
}

const Dialect& pipe_tag() {
    static const Dialect d{
        DialectKind::PipeTag, "pipe",
        "<|begin_think|>", "<|end_think|>",
        "<|begin_search_query|>", "<|end_search_query|>",
        "<|begin_search_result|>", "<|end_search_result|>",
        "<|begin_answer|>", "<|end_answer|>",
    };
    return d;
}

const Dialect& query_tag() {
    static const Dialect d{
        DialectKind::QueryTag, "query",
        "<think>", "</think>",
        "<query>", "</query>",
        "<knowledge>", "</knowledge>",
        "<answer>", "</answer>",
    };
    return d;
}

const Dialect& dialect_by_kind(DialectKind kind) {
    switch (kind) {
        case DialectKind::AngleTag: return angle_tag();
        case DialectKind::PipeTag: return pipe_tag();
        case DialectKind::QueryTag: return query_tag();
    }
    return angle_tag();
}

std::optional<DialectKind> dialect_kind_from_name(const std::string& name) {
    if (name == "angle") return DialectKind::AngleTag;
    if (name == "pipe") return DialectKind::PipeTag;
    if (name == "query") return DialectKind::QueryTag;
    return std::nullopt;
}

const char* segment_kind_name(SegmentKind k) {
    switch (k) {
        case SegmentKind::Think: return "think";
        case SegmentKind::SearchQuery: return "search";
        case SegmentKind::Information: return "information";
        case SegmentKind::Answer: return "answer";
        case SegmentKind::Plain: return "plain";
    }
    return "plain";
}

namespace {

struct TagSpec {
    SegmentKind kind;
    const std::string* open;
    const std::string* close;
};

std::array<TagSpec, 4> tag_table(const Dialect& d) {
    return {{
        {SegmentKind::Think, &d.think_open, &d.think_close},
        {SegmentKind::SearchQuery, &d.action_open, &d.action_close},
        {SegmentKind::Information, &d.info_open, &d.info_close},
        {SegmentKind::Answer, &d.answer_open, &d.answer_close},
    }};
}

bool is_all_space(std::string_view s) {
    for (char c : s) {
        if (!is_space_byte(c)) return false;
    }
    return true;
}

// Emit [from, to) as Plain unless it is empty or whitespace-only.
void flush_plain(std::vector<Segment>& out, const std::string& text,
                 std::size_t from, std::size_t to) {
    if (from >= to) return;
    std::string_view raw(text.data() + from, to - from);
    if (is_all_space(raw)) return;
    out.push_back(Segment{SegmentKind::Plain, std::string(raw), from, to});
}

}  // namespace

std::vector<Segment> parse_segments(const std::string& text, const Dialect& dialect) {
    std::vector<Segment> out;
    const auto tags = tag_table(dialect);
    std::size_t scan = 0;         // next position to look for an open delimiter
    std::size_t unclaimed = 0;    // start of text not yet assigned to a segment
    const std::size_t n = text.size();

    while (scan < n) {
        // Earliest open delimiter at or after scan; prefer the longest match
        // when two delimiters start at the same position.
        std::size_t best_pos = std::string::npos;
        int best_tag = -1;
        for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
            std::size_t p = text.find(*tags[i].open, scan);
            if (p == std::string::npos) continue;
            if (p < best_pos ||
                (p == best_pos && tags[i].open->size() > tags[best_tag].open->size())) {
                best_pos = p;
                best_tag = i;
            }
        }
        if (best_tag < 0) break;

        const TagSpec& tag = tags[best_tag];
        std::size_t payload_begin = best_pos + tag.open->size();
        std::size_t close_pos = text.find(*tag.close, payload_begin);
        if (close_pos == std::string::npos) {
            // Unmatched open: leave it as plain text and keep scanning after it.
            scan = best_pos + tag.open->size();
            continue;
        }

        flush_plain(out, text, unclaimed, best_pos);
        std::string payload = text.substr(payload_begin, close_pos - payload_begin);
        if (tag.kind != SegmentKind::Information) payload = trim(payload);
        std::size_t seg_end = close_pos + tag.close->size();
        out.push_back(Segment{tag.kind, std::move(payload), best_pos, seg_end});
        scan = seg_end;
        unclaimed = seg_end;
    }
    flush_plain(out, text, unclaimed, n);
    return out;
}

std::optional<Boundary> detect_action_boundary(const std::string& partial,
                                               const Dialect& dialect) {
    for (const Segment& seg : parse_segments(partial, dialect)) {
        if (seg.kind == SegmentKind::SearchQuery) {
            return Boundary{BoundaryKind::SearchIssued, seg.text};
        }
        if (seg.kind == SegmentKind::Answer) {
            return Boundary{BoundaryKind::AnswerIssued, seg.text};
        }
    }
    return std::nullopt;
}

namespace {

std::string cap_unit_text(const std::string& text, std::size_t budget) {
    if (text.size() <= budget) return text;
    return text.substr(0, budget) + "...";
}

}  // namespace

std::string format_evidence(const knowledge::RetrievalResult& results,
                            const RenderOptions& opts) {
    if (results.units.empty()) return "No results found.";
    std::string out;
    int doc_index = 0;
    for (std::size_t i = 0; i < results.units.size(); ++i) {
        const auto& unit = results.units[i];
        if (i > 0) out += "\n";
        if (unit.kind == knowledge::EvidenceKind::Chunk) {
            ++doc_index;
            out += "Doc " + std::to_string(doc_index) + "(Title: \"" + unit.title +
                   "\"): " + cap_unit_text(unit.text, opts.max_unit_chars);
        } else {
            out += cap_unit_text(unit.text, opts.max_unit_chars);
        }
    }
    return out;
}

std::string render_information(const knowledge::RetrievalResult& results,
                               const Dialect& dialect,
                               const RenderOptions& opts) {
    return dialect.info_open + format_evidence(results, opts) + dialect.info_close;
}

std::string render_segments(const std::vector<Segment>& segments, const Dialect& dialect) {
    std::string out;
    for (const Segment& seg : segments) {
        switch (seg.kind) {
            case SegmentKind::Think:
                out += dialect.think_open + seg.text + dialect.think_close;
                break;
            case SegmentKind::SearchQuery:
                out += dialect.action_open + seg.text + dialect.action_close;
                break;
            case SegmentKind::Information:
                out += dialect.info_open + seg.text + dialect.info_close;
                break;
            case SegmentKind::Answer:
                out += dialect.answer_open + seg.text + dialect.answer_close;
                break;
            case SegmentKind::Plain:
                out += seg.text;
                break;
        }
    }
    return out;
}

std::optional<std::string> extract_boxed(const std::string& text) {
    const std::string marker = "\\boxed{";
    std::optional<std::string> found;
    std::size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
        std::size_t start = pos + marker.size();
        int depth = 1;
        std::size_t i = start;
        for (; i < text.size(); ++i) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}' && --depth == 0) break;
        }
        if (i >= text.size()) break;  // unbalanced: ignore this occurrence
        found = trim(text.substr(start, i - start));
        pos = i + 1;
    }
    return found;
}

std::optional<std::string> extract_answer(const std::string& trajectory_text,
                                          const Dialect& dialect) {
    for (const Segment& seg : parse_segments(trajectory_text, dialect)) {
        if (seg.kind == SegmentKind::Answer) return seg.text;
    }
    if (dialect.kind == DialectKind::PipeTag) return extract_boxed(trajectory_text);
    return std::nullopt;
}

}  // namespace ragkit::protocol
