#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ragkit::knowledge {
struct RetrievalResult;
}

namespace ragkit::protocol {

enum class DialectKind { AngleTag, PipeTag, QueryTag };

// One tag dialect: the eight delimiters an agentic pipeline speaks.
// All eight are pairwise distinct, non-empty, matched case-sensitively
// with no whitespace tolerance inside the delimiter itself.
struct Dialect {
    DialectKind kind;
    std::string name;
    std::string think_open, think_close;
    std::string action_open, action_close;  // search / query
    std::string info_open, info_close;      // information / knowledge / search result
    std::string answer_open, answer_close;
};

// <think> <search> <information> <answer>
const Dialect& angle_tag();
// <|begin_search_query|> / <|begin_search_result|>; think/answer delimiters are
// reserved pipe forms the templates never instruct the model to emit, so text
// from the other dialects degrades to Plain here. Final answers arrive as
// \boxed{...} instead (see extract_answer).
const Dialect& pipe_tag();
// <think> <query> <knowledge> <answer>
const Dialect& query_tag();

const Dialect& dialect_by_kind(DialectKind kind);
std::optional<DialectKind> dialect_kind_from_name(const std::string& name);

enum class SegmentKind { Think, SearchQuery, Information, Answer, Plain };

struct Segment {
    SegmentKind kind;
    std::string text;
    std::size_t begin = 0;  // byte offsets into the source, tags included
    std::size_t end = 0;

    bool operator==(const Segment& o) const {
        return kind == o.kind && text == o.text;
    }
};

const char* segment_kind_name(SegmentKind k);

// Total scan over arbitrary model output. Never throws.
//
// Rules:
//  - a tag is recognized only as open-delimiter + payload + matching close;
//    the first close wins, so nested identical tags are not recognized
//  - an open delimiter with no matching close is plain text; scanning resumes
//    just past it and the residue ends up in a Plain segment
//  - whitespace-only text between recognized tags is an inter-segment gap and
//    produces no segment; any other unclaimed text becomes a Plain segment
//  - Think / SearchQuery / Answer payloads are trimmed; Information and Plain
//    text is verbatim
std::vector<Segment> parse_segments(const std::string& text, const Dialect& dialect);

enum class BoundaryKind { SearchIssued, AnswerIssued };

struct Boundary {
    BoundaryKind kind;
    std::string payload;
};

// First complete action tag (search or answer) in a streaming prefix, if any.
std::optional<Boundary> detect_action_boundary(const std::string& partial,
                                               const Dialect& dialect);

struct RenderOptions {
    // Per-evidence-unit character budget; longer unit text is cut at the
    // budget and "..." appended.
    std::size_t max_unit_chars = 2000;
};

// Evidence body without the surrounding info delimiters. Chunk units render
// as `Doc i(Title: "..."): body`, graph units as their serialized triple
// line; units are separated by newlines. Empty results render the fixed
// sentinel "No results found.".
std::string format_evidence(const knowledge::RetrievalResult& results,
                            const RenderOptions& opts = {});

// info_open + format_evidence(...) + info_close
std::string render_information(const knowledge::RetrievalResult& results,
                               const Dialect& dialect,
                               const RenderOptions& opts = {});

// Inverse of parse_segments for well-formed segment lists; Plain segments
// render as their raw text.
std::string render_segments(const std::vector<Segment>& segments, const Dialect& dialect);

// Payload of the first complete answer tag. Under PipeTag the boxed form
// \boxed{...} is also accepted (the last boxed occurrence, since the open-QA
// template puts the final answer last).
std::optional<std::string> extract_answer(const std::string& trajectory_text,
                                          const Dialect& dialect);

// Last complete \boxed{...} payload, brace-balanced.
std::optional<std::string> extract_boxed(const std::string& text);

}  // namespace ragkit::protocol
