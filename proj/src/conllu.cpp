#include "punct/conllu.hpp"

#include <charconv>
#include <sstream>

namespace punct {

std::string RawSentence::sent_id() const {
  for (const auto& c : comments) {
    size_t pos = c.find("sent_id");
    if (pos == std::string::npos) continue;
    size_t eq = c.find('=', pos);
    if (eq == std::string::npos) continue;
    size_t begin = c.find_first_not_of(" \t", eq + 1);
    if (begin == std::string::npos) return "";
    size_t end = c.find_last_not_of(" \t\r");
    return c.substr(begin, end - begin + 1);
  }
  return "";
}

namespace {

bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

// id column: plain integer = word; "a-b" = multiword range; "a.b" = empty node
enum class IdKind { Word, Range, Empty, Bad };

IdKind classify_id(std::string_view s, int& id) {
  if (s.find('-') != std::string_view::npos) return IdKind::Range;
  if (s.find('.') != std::string_view::npos) return IdKind::Empty;
  return parse_int(s, id) ? IdKind::Word : IdKind::Bad;
}

}  // namespace

std::vector<RawSentence> parse_conllu(std::string_view text) {
  std::vector<RawSentence> out;
  RawSentence cur;
  auto flush = [&] {
    if (!cur.tokens.empty() || !cur.comments.empty()) {
      if (!cur.tokens.empty()) out.push_back(std::move(cur));
      cur = RawSentence{};
    }
  };

  int lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = (nl == std::string_view::npos)
                                ? text.substr(pos)
                                : text.substr(pos, nl - pos);
    if (nl == std::string_view::npos && line.empty() && pos == text.size()) break;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      flush();
    } else if (line.front() == '#') {
      cur.comments.emplace_back(line);
    } else {
      std::vector<std::string_view> cols;
      size_t start = 0;
      while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
          cols.push_back(line.substr(start));
          break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
      }
      if (cols.size() != 10)
        throw ConlluError(lineno, "expected 10 tab-separated columns, got " +
                                      std::to_string(cols.size()));
      int id = 0;
      switch (classify_id(cols[0], id)) {
        case IdKind::Range:
        case IdKind::Empty:
          break;  // skipped
        case IdKind::Bad:
          throw ConlluError(lineno, "bad token id '" + std::string(cols[0]) + "'");
        case IdKind::Word: {
          RawToken tok;
          tok.id = id;
          tok.form = std::string(cols[1]);
          tok.lemma = std::string(cols[2]);
          tok.upos = std::string(cols[3]);
          tok.xpos = std::string(cols[4]);
          tok.feats = std::string(cols[5]);
          if (!parse_int(cols[6], tok.head))
            throw ConlluError(lineno, "non-integer head '" + std::string(cols[6]) + "'");
          tok.deprel = std::string(cols[7]);
          tok.deps = std::string(cols[8]);
          tok.misc = std::string(cols[9]);
          cur.tokens.push_back(std::move(tok));
          break;
        }
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  flush();
  return out;
}

std::string write_conllu(const RawSentence& s) {
  std::ostringstream os;
  for (const auto& c : s.comments) os << c << '\n';
  for (const auto& t : s.tokens) {
    os << t.id << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << '\t'
       << t.xpos << '\t' << t.feats << '\t' << t.head << '\t' << t.deprel
       << '\t' << t.deps << '\t' << t.misc << '\n';
  }
  os << '\n';
  return os.str();
}

std::string write_conllu(std::span<const RawSentence> sentences) {
  std::string out;
  for (const auto& s : sentences) out += write_conllu(s);
  return out;
}

}  // namespace punct
