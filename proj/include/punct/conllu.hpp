#ifndef PUNCT_CONLLU_HPP
#define PUNCT_CONLLU_HPP

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace punct {

struct ConlluError : std::runtime_error {
  int line;
  ConlluError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg),
        line(line_) {}
};

struct RawToken {
  int id = 0;
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;
  std::string deprel = "_";
  std::string deps = "_";
  std::string misc = "_";

  bool operator==(const RawToken&) const = default;
};

struct RawSentence {
  std::vector<std::string> comments;  // full lines, including leading '#'
  std::vector<RawToken> tokens;

  // value of "# sent_id = ..." if present, else ""
  std::string sent_id() const;
};

// Parses a UTF-8 CoNLL-U document (LF or CRLF). Multiword-token ranges and
// empty nodes are skipped. Throws ConlluError naming the offending line.
std::vector<RawSentence> parse_conllu(std::string_view text);

std::string write_conllu(std::span<const RawSentence> sentences);
std::string write_conllu(const RawSentence& sentence);

}  // namespace punct

#endif
