#include "ragkit/templates.hpp"

#include "ragkit/util.hpp"

namespace ragkit::templates {

namespace {

bool ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Returns the identifier if text[pos] begins a `{identifier}` marker.
std::string marker_at(const std::string& text, std::size_t pos, std::size_t* end) {
    if (text[pos] != '{') return {};
    std::size_t i = pos + 1;
    while (i < text.size() && ident_char(text[i])) ++i;
    if (i == pos + 1 || i >= text.size() || text[i] != '}') return {};
    *end = i + 1;
    return text.substr(pos + 1, i - pos - 1);
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    for (const auto& required : required_placeholders) {
        if (!values.count(required)) {
            throw ConfigError("template " + name + ": missing placeholder '" + required + "'");
        }
    }
    std::string out;
    out.reserve(body.size());
    std::size_t i = 0;
    while (i < body.size()) {
        if (body.compare(i, 2, "{{") == 0) {
            out.push_back('{');
            i += 2;
            continue;
        }
        if (body.compare(i, 2, "}}") == 0) {
            out.push_back('}');
            i += 2;
            continue;
        }
        std::size_t end = 0;
        std::string ident = marker_at(body, i, &end);
        if (!ident.empty()) {
            auto it = values.find(ident);
            if (it == values.end()) {
                throw ConfigError("template " + name + ": missing placeholder '" + ident + "'");
            }
            out += it->second;
            i = end;
            continue;
        }
        out.push_back(body[i]);
        ++i;
    }
    return out;
}

bool has_placeholder_markers(const std::string& text) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 2, "{{") == 0 || text.compare(i, 2, "}}") == 0) {
            i += 2;
            continue;
        }
        std::size_t end = 0;
        if (!marker_at(text, i, &end).empty()) return true;
        ++i;
    }
    return false;
}

namespace {

PromptTemplate make(std::string name, std::string body, std::set<std::string> required) {
    return PromptTemplate{std::move(name), std::move(body), std::move(required)};
}

}  // namespace

const PromptTemplate& search_o1_instruction() {
    static const PromptTemplate t = make(
        "search_o1_instruction",
        "You are a reasoning assistant with the ability to perform web searches to help you "
        "answer the user's question accurately.\n"
        "You have special tools:\n"
        "To perform a search: write <|begin_search_query|> your query here <|end_search_query|>.\n"
        "Then, the system will search and analyze relevant web pages, then provide you with "
        "helpful information in the format <|begin_search_result|> ...search results... "
        "<|end_search_result|>.\n"
        "You can repeat the search process multiple times if necessary. The maximum number of "
        "search attempts is limited to {MAX_SEARCH_LIMIT}.\n"
        "Once you have all the information you need, continue your reasoning.\n"
        "Example:\n"
        "Question: \"...\"\n"
        "Assistant thinking steps:\n"
        "- I might need to look up details about ...\n"
        "Assistant:\n"
        "<|begin_search_query|>...<|end_search_query|>\n"
        "(System returns processed information from relevant web pages)\n"
        "Assistant continues reasoning with the new information...\n"
        "Remember:\n"
        "- Use <|begin_search_query|> to request a web search and end with "
        "<|end_search_query|>.\n"
        "- When done searching, continue your reasoning.\n"
        "Question:{question}",
        {"MAX_SEARCH_LIMIT", "question"});
    return t;
}

const PromptTemplate& reason_in_documents() {
    static const PromptTemplate t = make(
        "reason_in_documents",
        "Task Instruction:\n"
        "You are tasked with reading and analyzing web pages based on the following inputs: "
        "Previous Reasoning Steps, Current Search Query, and Searched Web Pages. Your objective "
        "is to extract relevant and helpful information for Current Search Query from the "
        "Searched Web Pages and seamlessly integrate this information into the Previous "
        "Reasoning Steps to continue reasoning for the original question.\n"
        "Guidelines:\n"
        "1. Analyze the Searched Web Pages:\n"
        "- Carefully review the content of each searched web page.\n"
        "- Identify factual information that is relevant to the Current Search Query and can "
        "aid in the reasoning process for the original question.\n"
        "2. Extract Relevant Information:\n"
        "-Select the information from the Searched Web Pages that directly contributes to "
        "advancing the Previous Reasoning Steps.\n"
        "-Ensure that the extracted information is accurate and relevant.\n"
        "3. Output Format:\n"
        "- If the web pages provide helpful information for current search query: Present the "
        "information beginning with 'Final Information' as shown below.\n"
        "Final Information\n"
        "[Helpful information]\n"
        "- If the web pages do not provide any helpful information for current search query: "
        "Output the following text.\n"
        "Final Information\n"
        "No helpful information found.\n"
        "Inputs:\n"
        "- Previous Reasoning Steps:\n"
        "{prev_reasoning}\n"
        "- Current Search Query:\n"
        "{search_query}\n"
        "- Searched Web Pages:\n"
        "{document}\n"
        "Now you should analyze each web page and find helpful information based on the current "
        "search query \"{search_query}\" and previous reasoning steps.",
        {"prev_reasoning", "search_query", "document"});
    return t;
}

const PromptTemplate& open_qa_boxed() {
    static const PromptTemplate t = make(
        "open_qa_boxed",
        "Please answer the following question.\n"
        "You should provide your final answer in the format \\boxed{{YOUR_ANSWER}}.\n"
        "Question:\n"
        "{question}",
        {"question"});
    return t;
}

const PromptTemplate& decompose_text() {
    static const PromptTemplate t = make(
        "decompose_text",
        "---Role---\n"
        "You are a helpful assistant specializing in complex query decomposition.\n"
        "---Goal---\n"
        "Given a main query, your task is to break it down into several atomic sub-queries, "
        "which should directly correspond to parts of the original query.\n"
        "---Instructions---\n"
        "- Decompose the main query into clear and actionable sub-queries that represent "
        "smaller, solvable pieces of the main question.\n"
        "- Ensure that each sub-query addresses one specific entity or concept, with the goal "
        "of retrieving information that will answer the overall main query.\n"
        "- Use sequential numbering (i.e., #1, #2, etc.) to represent answers of previous "
        "sub-queries. For example, #1 refers to the answer of Sub-query 1.\n"
        "- Make sure the sub-queries are logically ordered, where the output of one sub-query "
        "might feed into the next.\n"
        "- The final output should be in JSON format, where each sub-query is listed as a "
        "key-value pair.\n"
        "---Examples---\n"
        "Main Query:\n"
        "How many times did plague occur in the place where the creator of The Worship of "
        "Venus died?\n"
        "Sub-queries:\n"
        "{{\n"
        "\"Sub-query 1\": \"Who is the creator of The Worship of Venus?\",\n"
        "\"Sub-query 2\": \"Where did #1 die?\",\n"
        "\"Sub-query 3\": \"How many times did plague occur in #2?\"\n"
        "}}\n"
        "Main Query:\n"
        "When did the city where Hillcrest High School is located become the capital of the "
        "state where the screenwriter of The Poor Boob was born?\n"
        "Sub-queries:\n"
        "{{\n"
        "\"Sub-query 1\": \"Where is Hillcrest High School located?\",\n"
        "\"Sub-query 2\": \"Who is the screenwriter of The Poor Boob?\",\n"
        "\"Sub-query 3\": \"Where was #2 born?\",\n"
        "\"Sub-query 4\": \"When did the city from #1 become the capital of the state from "
        "#3?\"\n"
        "}}\n"
        "Main Query:\n"
        "What crop, which is a big feeder of nitrogen, has a gross income of $1,363.00 per acre "
        "and a net profit of $658.00?\n"
        "Sub-queries:\n"
        "{{\n"
        "\"Sub-query 1\": \"Which crops are considered big feeders of nitrogen?\",\n"
        "\"Sub-query 2\": \"Among #1, which crop has a gross income of $1,363.00 per acre?\",\n"
        "\"Sub-query 3\": \"Does #2 have a net profit of $658.00?\"\n"
        "}}\n"
        "---Input---\n"
        "Main Query:\n"
        "{query}\n"
        "---Output---",
        {"query"});
    return t;
}

const PromptTemplate& decompose_triple() {
    static const PromptTemplate t = make(
        "decompose_triple",
        "---Role---\n"
        "You are a helpful assistant specializing in complex query decomposition for knowledge "
        "graph retrieval.\n"
        "---Goal---\n"
        "Given a main query, your task is to break it down into atomic sub-queries in the form "
        "of subject-predicate-object triples. These should correspond directly to parts of the "
        "original query and be suitable for querying a knowledge graph.\n"
        "---Instructions---\n"
        "- Decompose the main query into a sequence of sub-queries, where each sub-query "
        "consists of one or more atomic triples in the format: (\"entity1\", \"relationship\", "
        "\"entity2\").\n"
        "- Replace any unknown entity with a placeholder such as Entity#1, Entity#2, etc.\n"
        "- Maintain logical ordering, where the result of one sub-query (e.g., Entity#1) might "
        "be required for the next.\n"
        "- Each sub-query may contain more than one triple if needed to express the full "
        "meaning.\n"
        "- The final output should be in JSON format, where each key is a sub-query and the "
        "value is a list of atomic triples enclosed in parentheses.\n"
        "---Examples---\n"
        "Main Query:\n"
        "How many times did plague occur in the place where the creator of The Worship of "
        "Venus died?\n"
        "Sub-queries:\n"
        "{{\n"
        "\"Sub-query 1\": [(\"The Worship of Venus\", \"is created by\", \"Entity#1\")],\n"
        "\"Sub-query 2\": [(\"Entity#1\", \"died at\", \"Entity#2\")],\n"
        "\"Sub-query 3\": [\n"
        "(\"Plague\", \"occur in\", \"Entity#2\"),\n"
        "(\"Plague\", \"times of occur\", \"Entity#3\")\n"
        "]\n"
        "}}\n"
        "Main Query:\n"
        "When did the city where Hillcrest High School is located become the capital of the "
        "state where the screenwriter of The Poor Boob was born?\n"
        "Sub-queries:\n"
        "{{\n"
        "\"Sub-query 1\": [(\"Hillcrest High School\", \"is located in\", \"Entity#1\")],\n"
        "\"Sub-query 2\": [(\"The Poor Boob\", \"has screenwriter\", \"Entity#2\")],\n"
        "\"Sub-query 3\": [(\"Entity#2\", \"was born in\", \"Entity#3\")],\n"
        "\"Sub-query 4\": [\n"
        "(\"Entity#1\", \"is capital of\", \"Entity#3\"),\n"
        "(\"Entity#1\", \"became capital at\", \"Entity#4\")\n"
        "]\n"
        "}}\n"
        "Main Query:\n"
        "What crop, which is a big feeder of nitrogen, has a gross income of $1,363.00 per acre "
        "and a net profit of $658.00?\n"
        "Sub-queries:\n"
        "{{\n"
        "\"Sub-query 1\": [(\"Entity#1\", \"is a\", \"crop that is a heavy nitrogen feeder\")],\n"
        "\"Sub-query 2\": [(\"Entity#1\", \"has gross income per acre\", \"$1,363.00\")],\n"
        "\"Sub-query 3\": [(\"Entity#1\", \"has net profit\", \"$658.00\")]\n"
        "}}\n"
        "---Input---\n"
        "Main Query:\n"
        "{query}\n"
        "---Output---",
        {"query"});
    return t;
}

const PromptTemplate& evidence_verification() {
    static const PromptTemplate t = make(
        "evidence_verification",
        "---Role---\n"
        "You are a critical evaluator specializing in verifying the logical soundness and "
        "evidential sufficiency of model-generated responses.\n"
        "---Goal---\n"
        "Given a user query, retrieved context data, and the model-generated response, your "
        "task is to evaluate whether the response forms a rigorous logical loop supported by "
        "the provided evidence.\n"
        "---Instructions---\n"
        "- Carefully examine whether the response is strictly grounded in the retrieved "
        "context data.\n"
        "- Assess whether the reasoning process forms a complete logical chain, without "
        "missing steps or unsupported leaps.\n"
        "- Identify if there are evidence gaps, low-confidence claims, or speculative "
        "statements.\n"
        "- If the response demonstrates a well-supported, confident, and logically closed "
        "argument, conclude your analysis with \"Yes\".\n"
        "- If the response shows hesitation, incomplete reasoning, or lacks solid evidence "
        "support, conclude your analysis with \"No\".\n"
        "---Input---\n"
        "User-Query:\n"
        "{query}\n"
        "Retrieved Context Data:\n"
        "{context_data}\n"
        "Model Response:\n"
        "{model_response}\n"
        "---Output---",
        {"query", "context_data", "model_response"});
    return t;
}

const PromptTemplate& deep_answer() {
    static const PromptTemplate t = make(
        "deep_answer",
        "---Role---\n"
        "You are a helpful assistant specializing in complex question answering.\n"
        "---Goal---\n"
        "Given a complex query and retrieved context data, your task is to construct a "
        "logically sound, step-by-step answer. Your explanation should follow a rigorous "
        "reasoning path, incorporate relevant evidence, and establish clear relationships "
        "between the entities.\n"
        "---Instructions---\n"
        "- Break down the reasoning process into clear, coherent steps.\n"
        "- Use context data explicitly to support each reasoning step.\n"
        "- Make sure relationships between entities are logically explained.\n"
        "---Input---\n"
        "Query:\n"
        "{query}\n"
        "Context Data:\n"
        "{context_data}\n"
        "---Output---",
        {"query", "context_data"});
    return t;
}

const PromptTemplate& query_expansion() {
    static const PromptTemplate t = make(
        "query_expansion",
        "---Role---\n"
        "You are a helpful assistant specializing in query expansion for evidence completion.\n"
        "---Goal---\n"
        "Given a main query, retrieved context data, the model-generated response, and the "
        "evidence verification analysis, your task is to perform query expansion.\n"
        "If the evidence verification analysis shows that the current evidence is insufficient "
        "to support the logical chain of the response, generate one or more additional "
        "sub-queries.\n"
        "These sub-queries should aim to cover missing retrieval scenarios, fill in the "
        "evidence gaps, and guide towards a more complete and confident logical reasoning "
        "chain.\n"
        "---Instructions---\n"
        "- Use the retrieved context data, especially any existing sub-queries in the "
        "retrieval history, as references when generating new sub-queries.\n"
        "- Focus on producing complementary sub-queries that address aspects not yet fully "
        "supported by evidence.\n"
        "- Avoid duplicating existing sub-queries; instead, expand into related but uncovered "
        "areas.\n"
        "- Keep sub-queries clear, specific, and directly actionable for retrieval.\n"
        "- Output should be in the form of a Python-style List of strings, where each string "
        "is a new sub-query.\n"
        "---Input---\n"
        "Main Query:\n"
        "{query}\n"
        "Retrieved Context Data:\n"
        "{context_data}\n"
        "Model Response:\n"
        "{model_response}\n"
        "Evidence Verification Analysis:\n"
        "{evidence_verification}\n"
        "---Output---",
        {"query", "context_data", "model_response", "evidence_verification"});
    return t;
}

const PromptTemplate& search_r1_instruction() {
    static const PromptTemplate t = make(
        "search_r1_instruction",
        "Answer the given question.\n\n"
        "You must conduct reasoning inside <think> and </think> first every time you get new "
        "information.\n\n"
        "After reasoning, if you find you lack some knowledge, you can call a search engine by "
        "<search> query </search> and it will return the top searched results between "
        "<information> and </information>.\n\n"
        "You can search as many times as your want.\n\n"
        "If you find no further external knowledge needed, you can directly provide the answer "
        "inside <answer> and </answer>, without detailed illustrations. For example, "
        "<answer> Beijing </answer>.\n\n"
        "Question: {question}",
        {"question"});
    return t;
}

const PromptTemplate& graph_r1_instruction() {
    static const PromptTemplate t = make(
        "graph_r1_instruction",
        "Answer the given question.\n"
        "You can query from knowledge base provided to you to answer the question.\n"
        "You can query knowledge as many times as you want.\n"
        "You must first conduct reasoning inside <think>...</think>.\n"
        "If you need to query knowledge, you can set a query statement between "
        "<query>...</query> to query from knowledge base after <think>...</think>.\n"
        "When you have the final answer, you can output the answer inside "
        "<answer>...</answer>.\n"
        "Output format for query:\n"
        "<think>\n"
        "...\n"
        "</think>\n"
        "<query>\n"
        "...\n"
        "</query>\n"
        "Output format for answer:\n"
        "<think>\n"
        "...\n"
        "</think>\n"
        "<answer>\n"
        "...\n"
        "</answer>\n"
        "Question: {question}",
        {"question"});
    return t;
}

const PromptTemplate& single_shot_instruction() {
    static const PromptTemplate t = make(
        "single_shot_instruction",
        "Answer the given question using the evidence below.\n\n"
        "{evidence}\n\n"
        "Provide your final answer inside <answer> and </answer>. For example, "
        "<answer> Beijing </answer>.\n\n"
        "Question: {question}",
        {"evidence", "question"});
    return t;
}

namespace {

const std::vector<const PromptTemplate*>& registry() {
    static const std::vector<const PromptTemplate*> all = {
        &search_o1_instruction(), &reason_in_documents(), &open_qa_boxed(),
        &decompose_text(),        &decompose_triple(),    &evidence_verification(),
        &deep_answer(),           &query_expansion(),     &search_r1_instruction(),
        &graph_r1_instruction(),  &single_shot_instruction(),
    };
    return all;
}

}  // namespace

const PromptTemplate& by_name(const std::string& name) {
    for (const auto* t : registry()) {
        if (t->name == name) return *t;
    }
    throw ConfigError("unknown template: " + name);
}

std::vector<std::string> template_names() {
    std::vector<std::string> names;
    for (const auto* t : registry()) names.push_back(t->name);
    return names;
}

}  // namespace ragkit::templates
