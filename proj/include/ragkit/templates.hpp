#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace ragkit::templates {

// Bump when any template body changes; pipelines and cached results key on
// template content through the run-config hash, this tracks the asset set.
constexpr int kTemplateSetVersion = 1;

// A named prompt body with `{name}` placeholders. Literal braces are written
// `{{` and `}}`. Rendering with every required placeholder provided leaves no
// residual `{name}` markers.
struct PromptTemplate {
    std::string name;
    std::string body;
    std::set<std::string> required_placeholders;

    std::string render(const std::map<std::string, std::string>& values) const;
};

// True if any unescaped {identifier} marker remains.
bool has_placeholder_markers(const std::string& text);

const PromptTemplate& by_name(const std::string& name);
std::vector<std::string> template_names();

// The agentic instruction set, shipped verbatim as versioned text assets.
const PromptTemplate& search_o1_instruction();   // pipe-tag on-demand loop
const PromptTemplate& reason_in_documents();     // knowledge refinement
const PromptTemplate& open_qa_boxed();           // \boxed{...} answer form
const PromptTemplate& decompose_text();
const PromptTemplate& decompose_triple();
const PromptTemplate& evidence_verification();
const PromptTemplate& deep_answer();
const PromptTemplate& query_expansion();
const PromptTemplate& search_r1_instruction();   // angle-tag ReAct loop
const PromptTemplate& graph_r1_instruction();    // query-tag ReAct loop
const PromptTemplate& single_shot_instruction();

}  // namespace ragkit::templates
