#include "snipsearch/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_map>

#include "snipsearch/text.hpp"

namespace snipsearch {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

std::optional<PostId> parse_id(const XmlRowReader::Attributes& attrs, std::string_view name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return std::nullopt;
  auto v = parse_int(it->second);
  if (!v || *v <= 0) return std::nullopt;
  return *v;
}

bool is_name_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':';
}

bool is_name_char(char c) {
  return is_name_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.';
}

// Parses `<row a="1" b='2' />` into attributes. Returns false when malformed.
bool parse_row_attributes(std::string_view row, XmlRowReader::Attributes& attrs) {
  if (row.substr(0, 4) != "<row") return false;
  std::size_t i = 4;
  if (i < row.size() && !std::isspace(static_cast<unsigned char>(row[i])) && row[i] != '/') {
    return false;
  }
  while (true) {
    while (i < row.size() && std::isspace(static_cast<unsigned char>(row[i]))) ++i;
    if (i >= row.size()) return false;
    if (row.substr(i) == "/>") return true;
    if (!is_name_start(row[i])) return false;
    std::size_t name_end = i;
    while (name_end < row.size() && is_name_char(row[name_end])) ++name_end;
    std::string name(row.substr(i, name_end - i));
    i = name_end;
    while (i < row.size() && std::isspace(static_cast<unsigned char>(row[i]))) ++i;
    if (i >= row.size() || row[i] != '=') return false;
    ++i;
    while (i < row.size() && std::isspace(static_cast<unsigned char>(row[i]))) ++i;
    if (i >= row.size() || (row[i] != '"' && row[i] != '\'')) return false;
    const char quote = row[i++];
    const std::size_t close = row.find(quote, i);
    if (close == std::string_view::npos) return false;
    std::string_view raw = row.substr(i, close - i);
    if (raw.find('<') != std::string_view::npos) return false;
    if (!attrs.emplace(std::move(name), decode_entities(raw)).second) return false;
    i = close + 1;
    // Attributes must be separated by whitespace.
    if (i < row.size() && !std::isspace(static_cast<unsigned char>(row[i])) && row[i] != '/') {
      return false;
    }
  }
}

// Position just past the `/>` closing a row that starts at 0, ignoring
// quoted text; npos while incomplete. Sets `broken` when a new tag opens first.
std::size_t row_close(std::string_view buf, bool& broken) {
  char quote = 0;
  for (std::size_t i = 1; i < buf.size(); ++i) {
    const char c = buf[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '<') {
      broken = true;
      return i;
    } else if (c == '/' && i + 1 < buf.size() && buf[i + 1] == '>') {
      return i + 2;
    }
  }
  return std::string_view::npos;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

bool RawPost::has_tag(std::string_view tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::string_view to_string(SnippetRole role) {
  switch (role) {
    case SnippetRole::best: return "best";
    case SnippetRole::non_best: return "non_best";
    case SnippetRole::non_relevant: return "non_relevant";
  }
  return "non_best";
}

SnippetRole role_from_string(std::string_view name) {
  if (name == "best") return SnippetRole::best;
  if (name == "non_best") return SnippetRole::non_best;
  if (name == "non_relevant") return SnippetRole::non_relevant;
  throw Error("unknown snippet role: " + std::string(name));
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out += text[i++];
      continue;
    }
    const std::size_t semi = text.find(';', i);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += text[i++];
      continue;
    }
    std::string_view name = text.substr(i + 1, semi - i - 1);
    bool decoded = true;
    if (name == "lt") {
      out += '<';
    } else if (name == "gt") {
      out += '>';
    } else if (name == "amp") {
      out += '&';
    } else if (name == "quot") {
      out += '"';
    } else if (name == "apos") {
      out += '\'';
    } else if (name == "nbsp") {
      out += ' ';
    } else if (name.size() > 1 && name[0] == '#') {
      std::uint32_t cp = 0;
      std::from_chars_result r{};
      if (name[1] == 'x' || name[1] == 'X') {
        r = std::from_chars(name.data() + 2, name.data() + name.size(), cp, 16);
      } else {
        r = std::from_chars(name.data() + 1, name.data() + name.size(), cp, 10);
      }
      if (r.ec == std::errc{} && r.ptr == name.data() + name.size() && cp <= 0x10FFFF) {
        append_utf8(out, cp);
      } else {
        decoded = false;
      }
    } else {
      decoded = false;
    }
    if (decoded) {
      i = semi + 1;
    } else {
      out += text[i++];
    }
  }
  return out;
}

std::vector<std::string> parse_tags(std::string_view tags) {
  std::vector<std::string> out;
  if (tags.empty()) return out;
  if (tags.front() == '<') {
    std::size_t i = 0;
    while (i < tags.size()) {
      const std::size_t open = tags.find('<', i);
      if (open == std::string_view::npos) break;
      const std::size_t close = tags.find('>', open);
      if (close == std::string_view::npos) break;
      if (close > open + 1) out.emplace_back(tags.substr(open + 1, close - open - 1));
      i = close + 1;
    }
  } else {
    std::size_t i = 0;
    while (i <= tags.size()) {
      std::size_t bar = tags.find('|', i);
      if (bar == std::string_view::npos) bar = tags.size();
      if (bar > i) out.emplace_back(tags.substr(i, bar - i));
      i = bar + 1;
    }
  }
  return out;
}

std::vector<std::string> extract_code_blocks(std::string_view html) {
  std::vector<std::string> blocks;
  const std::string lowered = lower(html);
  std::size_t pos = 0;
  while (true) {
    std::size_t open = lowered.find("<code", pos);
    if (open == std::string::npos) break;
    const char after = open + 5 < lowered.size() ? lowered[open + 5] : '\0';
    if (after != '>' && !std::isspace(static_cast<unsigned char>(after))) {
      pos = open + 5;
      continue;
    }
    const std::size_t content = lowered.find('>', open);
    if (content == std::string::npos) break;
    const std::size_t close = lowered.find("</code>", content);
    if (close == std::string::npos) break;
    // Drop markup nested inside the code element (highlighting spans etc.).
    std::string text;
    bool in_tag = false;
    for (std::size_t i = content + 1; i < close; ++i) {
      const char c = html[i];
      if (c == '<') {
        in_tag = true;
      } else if (c == '>' && in_tag) {
        in_tag = false;
      } else if (!in_tag) {
        text += c;
      }
    }
    blocks.push_back(decode_entities(text));
    pos = close + 7;
  }
  return blocks;
}

std::size_t XmlRowReader::read(const std::function<void(std::size_t, const Attributes&)>& on_row,
                               const std::function<void(std::size_t)>& on_malformed) {
  std::string pending;
  std::size_t rows = 0;
  std::size_t pending_row = 0;
  std::uint64_t byte_offset = 0;
  std::uint64_t pending_offset = 0;
  bool root_open = false;
  bool root_closed = false;
  std::string line;

  auto finish_pending = [&](std::size_t end) {
    Attributes attrs;
    if (parse_row_attributes(trim(std::string_view(pending).substr(0, end)), attrs)) {
      on_row(pending_row, attrs);
    } else {
      on_malformed(pending_row);
    }
    pending.clear();
  };

  while (std::getline(in_, line)) {
    const std::uint64_t line_offset = byte_offset;
    byte_offset += line.size() + 1;
    std::string_view view = trim(line);
    if (pending.empty()) {
      if (view.empty()) continue;
      if (view.substr(0, 2) == "<?") continue;
      if (view.substr(0, 4) == "<row") {
        pending_row = ++rows;
        pending_offset = line_offset;
        pending.assign(view);
      } else if (view.substr(0, 2) == "</") {
        root_closed = true;
        continue;
      } else if (view.front() == '<' && view.back() == '>' && view.find("/>") == std::string_view::npos) {
        root_open = true;
        continue;
      } else {
        // Stray text between rows.
        on_malformed(++rows);
        continue;
      }
    } else {
      pending += '\n';
      pending.append(view);
    }
    bool broken = false;
    const std::size_t end = row_close(pending, broken);
    if (broken) {
      on_malformed(pending_row);
      std::string rest = pending.substr(end);
      pending.clear();
      if (std::string_view(rest).substr(0, 4) == "<row") {
        pending_row = ++rows;
        pending = std::move(rest);
        bool again = false;
        const std::size_t e2 = row_close(pending, again);
        if (!again && e2 != std::string::npos) finish_pending(e2);
      } else if (std::string_view(rest).substr(0, 2) == "</") {
        root_closed = true;
      }
      continue;
    }
    if (end != std::string::npos) finish_pending(end);
  }
  if (!pending.empty()) {
    throw IngestError("truncated stream: row " + std::to_string(pending_row) +
                      " (byte offset " + std::to_string(pending_offset) + ") never closes");
  }
  if (root_open && !root_closed) {
    throw IngestError("truncated stream: root element not closed after row " +
                      std::to_string(rows) + " (byte offset " + std::to_string(byte_offset) + ")");
  }
  return rows;
}

ParsedPosts parse_posts(std::istream& dump) {
  ParsedPosts out;
  std::set<PostId> seen;
  auto malformed = [&](std::size_t row) {
    ++out.report.malformed;
    out.report.malformed_rows.push_back(row);
  };
  XmlRowReader reader(dump);
  out.report.rows_read = reader.read(
      [&](std::size_t row, const XmlRowReader::Attributes& attrs) {
        const auto id = parse_id(attrs, "Id");
        const auto type_it = attrs.find("PostTypeId");
        if (!id || type_it == attrs.end()) return malformed(row);
        const auto type = parse_int(type_it->second);
        if (!type) return malformed(row);
        if (*type != 1 && *type != 2) {
          ++out.report.other_type;
          return;
        }
        RawPost post;
        post.post_id = *id;
        post.post_type = *type == 1 ? PostType::question : PostType::answer;
        if (auto it = attrs.find("Body"); it != attrs.end()) post.body = it->second;
        if (auto it = attrs.find("Score"); it != attrs.end()) {
          const auto score = parse_int(it->second);
          if (!score) return malformed(row);
          post.score = *score;
        }
        if (post.post_type == PostType::question) {
          const auto title = attrs.find("Title");
          if (title == attrs.end() || attrs.contains("ParentId")) return malformed(row);
          post.title = title->second;
          if (auto it = attrs.find("Tags"); it != attrs.end()) post.tags = parse_tags(it->second);
          if (attrs.contains("AcceptedAnswerId")) {
            post.accepted_answer_id = parse_id(attrs, "AcceptedAnswerId");
            if (!post.accepted_answer_id) return malformed(row);
          }
        } else {
          post.parent_id = parse_id(attrs, "ParentId");
          if (!post.parent_id || attrs.contains("Title")) return malformed(row);
        }
        if (!seen.insert(post.post_id).second) return malformed(row);
        out.posts.push_back(std::move(post));
      },
      malformed);
  return out;
}

ParsedLinks parse_post_links(std::istream& dump) {
  ParsedLinks out;
  auto malformed = [&](std::size_t row) {
    ++out.report.malformed;
    out.report.malformed_rows.push_back(row);
  };
  XmlRowReader reader(dump);
  out.report.rows_read = reader.read(
      [&](std::size_t row, const XmlRowReader::Attributes& attrs) {
        const auto source = parse_id(attrs, "PostId");
        const auto target = parse_id(attrs, "RelatedPostId");
        const auto type_it = attrs.find("LinkTypeId");
        if (!source || !target || type_it == attrs.end()) return malformed(row);
        const auto type = parse_int(type_it->second);
        if (!type) return malformed(row);
        out.links.push_back({*source, *target, *type == 3 ? LinkType::duplicate : LinkType::linked});
      },
      malformed);
  return out;
}

DuplicateExtraction extract_duplicate_pairs(const std::vector<RawPost>& posts,
                                            const std::vector<PostLink>& links,
                                            std::string_view tag_filter) {
  if (tag_filter.empty()) throw ConfigError("extract_duplicate_pairs: empty tag filter");
  std::unordered_map<PostId, const RawPost*> by_id;
  for (const auto& p : posts) by_id.emplace(p.post_id, &p);

  DuplicateExtraction out;
  std::set<std::pair<PostId, PostId>> seen;
  for (const auto& link : links) {
    if (link.link_type != LinkType::duplicate) continue;
    auto dup_it = by_id.find(link.source_post_id);
    auto master_it = by_id.find(link.target_post_id);
    if (dup_it == by_id.end() || master_it == by_id.end()) {
      ++out.missing_endpoints;
      continue;
    }
    const RawPost& dup = *dup_it->second;
    const RawPost& master = *master_it->second;
    if (dup.post_id == master.post_id || dup.post_type != PostType::question ||
        master.post_type != PostType::question || !dup.has_tag(tag_filter) ||
        !master.has_tag(tag_filter)) {
      ++out.filtered;
      continue;
    }
    DuplicatePair pair{master.post_id, dup.post_id, tokenize_title(master.title),
                       tokenize_title(dup.title)};
    if (pair.master_title.empty() || pair.duplicate_title.empty()) {
      ++out.filtered;
      continue;
    }
    if (!seen.emplace(pair.master_id, pair.duplicate_id).second) continue;
    out.pairs.push_back(std::move(pair));
  }
  std::sort(out.pairs.begin(), out.pairs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.master_id, a.duplicate_id) < std::tie(b.master_id, b.duplicate_id);
  });
  return out;
}

SnippetExtraction extract_question_snippets(const std::vector<RawPost>& posts,
                                            std::string_view tag_filter) {
  if (tag_filter.empty()) throw ConfigError("extract_question_snippets: empty tag filter");
  std::map<PostId, std::vector<const RawPost*>> answers_by_question;
  std::vector<const RawPost*> questions;
  for (const auto& p : posts) {
    if (p.post_type == PostType::answer) {
      answers_by_question[*p.parent_id].push_back(&p);
    } else if (p.has_tag(tag_filter)) {
      questions.push_back(&p);
    }
  }
  std::sort(questions.begin(), questions.end(),
            [](const RawPost* a, const RawPost* b) { return a->post_id < b->post_id; });

  SnippetExtraction out;
  for (const RawPost* q : questions) {
    ++out.questions_seen;
    Tokens title = tokenize_title(q->title);
    if (!is_how_question(title)) {
      ++out.questions_not_how;
      continue;
    }
    auto answers = answers_by_question[q->post_id];
    std::sort(answers.begin(), answers.end(),
              [](const RawPost* a, const RawPost* b) { return a->post_id < b->post_id; });

    struct AnswerBlocks {
      const RawPost* answer;
      std::vector<Tokens> blocks;
    };
    std::vector<AnswerBlocks> surviving;
    for (const RawPost* a : answers) {
      AnswerBlocks ab{a, {}};
      for (const auto& block : extract_code_blocks(a->body)) {
        Tokens code = normalize_code(block);
        if (code.size() >= kMinCodeTokens && code.size() <= kMaxCodeTokens) {
          ab.blocks.push_back(std::move(code));
        }
      }
      if (!ab.blocks.empty()) surviving.push_back(std::move(ab));
    }
    if (surviving.empty()) {
      ++out.questions_without_snippet;
      continue;
    }

    const AnswerBlocks* best = nullptr;
    for (const auto& ab : surviving) {
      if (q->accepted_answer_id && ab.answer->post_id == *q->accepted_answer_id) best = &ab;
    }
    if (!best) {
      // Answers are in id order, so strict > keeps the lowest id on ties.
      for (const auto& ab : surviving) {
        if (!best || ab.answer->score > best->answer->score) best = &ab;
      }
    }

    for (const auto& ab : surviving) {
      const bool is_best = &ab == best;
      const bool accepted = q->accepted_answer_id && ab.answer->post_id == *q->accepted_answer_id;
      for (std::size_t b = 0; b < ab.blocks.size(); ++b) {
        if (is_best && b > 0) break;  // one best snippet per question
        QuestionSnippet s;
        s.snippet_id = static_cast<PostId>(out.snippets.size() + 1);
        s.question_id = q->post_id;
        s.answer_id = ab.answer->post_id;
        s.title = title;
        s.code = ab.blocks[b];
        s.role = is_best ? SnippetRole::best : SnippetRole::non_best;
        s.answer_score = ab.answer->score;
        s.answer_accepted = accepted;
        out.snippets.push_back(std::move(s));
      }
    }
  }
  return out;
}

OverlapStats overlap_stats(const DuplicatePair& pair) {
  std::set<std::string> master(pair.master_title.begin(), pair.master_title.end());
  std::size_t common = 0;
  std::set<std::string> dup(pair.duplicate_title.begin(), pair.duplicate_title.end());
  for (const auto& t : dup) common += master.count(t);
  return {pair.master_title.size(), pair.duplicate_title.size(), common};
}

Dictionary load_wordlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dictionary " + path);
  Dictionary words;
  std::string line;
  while (std::getline(in, line)) {
    auto word = trim(line);
    if (!word.empty()) words.insert(lower(word));
  }
  if (words.empty()) throw ConfigError("dictionary " + path + " is empty");
  return words;
}

std::vector<Tokens> strip_domain_context(const std::vector<Tokens>& titles,
                                         const Dictionary& dictionary) {
  if (dictionary.empty()) throw ConfigError("strip_domain_context: empty dictionary");
  std::vector<Tokens> out;
  out.reserve(titles.size());
  for (const auto& title : titles) {
    Tokens kept;
    for (const auto& tok : title) {
      if (dictionary.contains(tok)) kept.push_back(tok);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

Json to_json(const DuplicatePair& pair) {
  Json j;
  j["master_id"] = pair.master_id;
  j["duplicate_id"] = pair.duplicate_id;
  j["master_title"] = pair.master_title;
  j["duplicate_title"] = pair.duplicate_title;
  return j;
}

DuplicatePair duplicate_pair_from_json(const Json& j) {
  return {j.at("master_id").get<PostId>(), j.at("duplicate_id").get<PostId>(),
          j.at("master_title").get<Tokens>(), j.at("duplicate_title").get<Tokens>()};
}

Json to_json(const QuestionSnippet& s) {
  Json j;
  j["question_id"] = s.question_id;
  j["answer_id"] = s.answer_id;
  j["title"] = s.title;
  j["code"] = s.code;
  j["role"] = std::string(to_string(s.role));
  j["answer_score"] = s.answer_score;
  j["answer_accepted"] = s.answer_accepted;
  j["snippet_id"] = s.snippet_id;
  return j;
}

QuestionSnippet question_snippet_from_json(const Json& j) {
  QuestionSnippet s;
  s.question_id = j.at("question_id").get<PostId>();
  s.answer_id = j.at("answer_id").get<PostId>();
  s.title = j.at("title").get<Tokens>();
  s.code = j.at("code").get<Tokens>();
  s.role = role_from_string(j.at("role").get<std::string>());
  s.answer_score = j.at("answer_score").get<std::int64_t>();
  s.answer_accepted = j.at("answer_accepted").get<bool>();
  s.snippet_id = j.at("snippet_id").get<PostId>();
  return s;
}

std::vector<DuplicatePair> read_duplicate_pairs(const std::string& path) {
  return read_jsonl<DuplicatePair>(path, duplicate_pair_from_json);
}

void write_duplicate_pairs(const std::string& path, const std::vector<DuplicatePair>& pairs) {
  write_jsonl<DuplicatePair>(path, pairs, [](const DuplicatePair& p) { return to_json(p); });
}

std::vector<QuestionSnippet> read_snippets(const std::string& path) {
  return read_jsonl<QuestionSnippet>(path, question_snippet_from_json);
}

void write_snippets(const std::string& path, const std::vector<QuestionSnippet>& snippets) {
  write_jsonl<QuestionSnippet>(path, snippets, [](const QuestionSnippet& s) { return to_json(s); });
}

}  // namespace snipsearch
