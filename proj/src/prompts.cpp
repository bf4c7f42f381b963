#include "rat/prompts.hpp"

#include <set>

namespace rat {

namespace {

const std::map<std::string, std::string, std::less<>>& registry() {
  static const std::map<std::string, std::string, std::less<>> templates{
      {"draft",
       "##Question:\n"
       "{question}\n"
       "##Instruction:\n"
       "Try to answer this question/instruction with step-by-step thoughts and make the answer more "
       "structural.\n"
       "Use /n/n to split the answer into several paragraphs.\n"
       "Just respond to the instruction directly. DO NOT add additional explanations or introducement "
       "in the answer unless you are asked to."},
      {"query",
       "##Question:\n"
       "{question}\n"
       "##Content:\n"
       "{answer}\n"
       "##Instruction:\n"
       "I want to verify the content correctness of the given question, especially the last "
       "sentences.\n"
       "Please summarize the content with the corresponding question.\n"
       "This summarization will be used as a query to search with Bing search engine.\n"
       "The query should be short but need to be specific to promise Bing can find related knowledge "
       "or pages.\n"
       "You can also use search syntax to make the query short and clear enough for the search engine "
       "to find relevant language data.\n"
       "Try to make the query as relevant as possible to the last few sentences in the content.\n"
       "**IMPORTANT**\n"
       "Just output the query directly. DO NOT add additional explanations or introducement in the "
       "answer unless you are asked to."},
      {"revise",
       "##Existing Text in Wiki Web:\n"
       "{content}\n"
       "##Question:\n"
       "{question}\n"
       "##Answer:\n"
       "{answer}\n"
       "##Instruction:\n"
       "I want to revise the answer according to retrieved related text of the question in WIKI "
       "pages.\n"
       "You need to check whether the answer is correct.\n"
       "If you find some errors in the answer, revise the answer to make it better.\n"
       "If you find some necessary details are ignored, add it to make the answer more plausible "
       "according to the related text.\n"
       "If you find the answer is right and do not need to add more details, just output the "
       "original answer directly.\n"
       "**IMPORTANT**\n"
       "Try to keep the structure (multiple paragraphs with its subtitles) in the revised answer and "
       "make it more structural for understanding.\n"
       "Split the paragraphs with /n/n characters.\n"
       "Just output the revised answer directly. DO NOT add additional explanations or annoucement in "
       "the revised answer unless you are asked to."},
      // Drafting prompts for the other task kinds are local to this template set.
      {"draft-code",
       "##Question:\n"
       "{question}\n"
       "##Instruction:\n"
       "Let's think step by step. Write the solution as a sequence of steps, each step a short "
       "comment followed by the code for that step.\n"
       "Use /n/n to split the steps.\n"
       "Just respond to the instruction directly. DO NOT add additional explanations or introducement "
       "in the answer unless you are asked to."},
      {"draft-math",
       "##Question:\n"
       "{question}\n"
       "##Instruction:\n"
       "Let's think step by step. Solve the problem one reasoning step at a time and state the final "
       "numeric answer in the last step.\n"
       "Use /n/n to split the steps.\n"
       "Just respond to the instruction directly. DO NOT add additional explanations or introducement "
       "in the answer unless you are asked to."},
      {"draft-plan",
       "{question}\n"
       "Let's think step by step."},
      {"direct", "{question}"},
      {"rag",
       "##Existing Text in Wiki Web:\n"
       "{content}\n"
       "##Question:\n"
       "{question}\n"
       "##Instruction:\n"
       "Answer the question/instruction. Use the related text above where it helps.\n"
       "Just respond to the instruction directly. DO NOT add additional explanations or introducement "
       "in the answer unless you are asked to."},
      {"synthesize",
       "##Question:\n"
       "{question}\n"
       "##Revised Thoughts:\n"
       "{answer}\n"
       "##Instruction:\n"
       "Produce the complete response to the question from the revised thoughts above, following "
       "them step by step.\n"
       "Just output the response directly. DO NOT add additional explanations or introducement in the "
       "answer unless you are asked to."},
  };
  return templates;
}

struct Piece {
  bool placeholder;
  std::string text;
};

std::vector<Piece> parse(const std::string& text) {
  std::vector<Piece> pieces;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        if (!literal.empty()) pieces.push_back({false, std::move(literal)});
        literal.clear();
        pieces.push_back({true, text.substr(i + 1, j - i - 1)});
        i = j + 1;
        continue;
      }
    }
    literal += text[i++];
  }
  if (!literal.empty()) pieces.push_back({false, std::move(literal)});
  return pieces;
}

}  // namespace

const std::string& template_text(std::string_view template_id) {
  const auto& reg = registry();
  const auto it = reg.find(template_id);
  if (it == reg.end()) {
    throw Error(ErrorCode::UnknownTemplate, "unknown template '" + std::string(template_id) + "'");
  }
  return it->second;
}

std::vector<std::string> template_placeholders(std::string_view template_id) {
  std::set<std::string> names;
  for (const auto& p : parse(template_text(template_id))) {
    if (p.placeholder) names.insert(p.text);
  }
  return {names.begin(), names.end()};
}

std::vector<std::string> template_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, _] : registry()) ids.push_back(id);
  return ids;
}

Conversation render_prompt(std::string_view template_id, const Bindings& bindings) {
  const auto pieces = parse(template_text(template_id));
  std::set<std::string, std::less<>> used;
  std::string out;
  for (const auto& p : pieces) {
    if (!p.placeholder) {
      out += p.text;
      continue;
    }
    const auto it = bindings.find(p.text);
    if (it == bindings.end()) {
      throw Error(ErrorCode::MissingBinding, "template '" + std::string(template_id) +
                                                 "' needs a binding for {" + p.text + "}");
    }
    used.insert(p.text);
    out += it->second;
  }
  for (const auto& [name, _] : bindings) {
    if (!used.contains(name)) {
      throw Error(ErrorCode::UnknownBinding, "template '" + std::string(template_id) +
                                                 "' has no placeholder {" + name + "}");
    }
  }
  return Conversation{{Message{Role::User, std::move(out)}}};
}

std::string template_set_hash() {
  std::uint64_t h = fnv1a64(kDefaultTemplateSet);
  for (const auto& [id, text] : registry()) {
    h = fnv1a64(id, h);
    h = fnv1a64(text, h);
  }
  return hex64(h);
}

}  // namespace rat
