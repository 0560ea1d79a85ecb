#include "punct/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace punct {

namespace {

std::string f17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::string save_model(const Model& m) {
  std::ostringstream os;
  os << "punct-model v1\n";
  os << "[meta]\n";
  os << "seed " << m.seed << '\n';
  os << "start-mark " << m.prep.start_mark << '\n';
  os << "unk-threshold " << m.prep.unk_threshold << '\n';
  os << "quote-disambiguation " << (m.prep.quote_disambiguation ? "on" : "off")
     << '\n';
  os << "abbreviation-split " << (m.prep.abbreviation_split ? "on" : "off")
     << '\n';
  os << "final-mark " << m.final_mark << '\n';
  os << "correction-mode " << (m.correction_mode ? "on" : "off") << '\n';
  for (const auto& p : m.sym_table.pairs)
    os << "sym-pair " << p.first << ' ' << p.second << '\n';
  os << "[vocab]\n";
  os << write_vocab(m.vocab);
  os << "[theta]\n";
  for (size_t i = 0; i < m.theta.names.size(); ++i)
    os << m.theta.names[i] << '\t' << f17(m.theta.weights[i]) << '\n';
  os << "[phi]\n";
  os << "direction " << (m.channel.direction == Direction::L2R ? "l2r" : "r2l")
     << '\n';
  os << "channel " << (m.channel.identity ? "identity" : "full") << '\n';
  if (!m.channel.identity) {
    for (int a = 0; a < m.channel.sigma; ++a)
      for (int b = 0; b < m.channel.sigma; ++b) {
        const auto& s = m.channel.at(a, b);
        os << m.sigma[size_t(a)] << ' ' << m.sigma[size_t(b)] << ' ' << f17(s[0])
           << ' ' << f17(s[1]) << ' ' << f17(s[2]) << ' ' << f17(s[3]) << '\n';
      }
  }
  return os.str();
}

Model load_model(std::string_view text) {
  Model m;
  m.sym_table.pairs.clear();

  std::vector<std::string_view> lines;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = nl == std::string_view::npos
                                ? text.substr(pos)
                                : text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.empty() || lines[0] != "punct-model v1")
    throw std::runtime_error("not a punct model file");

  enum Section { None, Meta, Vocab, Theta, Phi } sec = None;
  std::string vocab_text;
  std::vector<std::string_view> phi_lines;
  for (size_t k = 1; k < lines.size(); ++k) {
    std::string_view line = lines[k];
    if (line == "[meta]") { sec = Meta; continue; }
    if (line == "[vocab]") { sec = Vocab; continue; }
    if (line == "[theta]") { sec = Theta; continue; }
    if (line == "[phi]") { sec = Phi; continue; }
    if (line.empty() && sec != Vocab) continue;
    switch (sec) {
      case Meta: {
        size_t sp = line.find(' ');
        std::string key(line.substr(0, sp));
        std::string val(sp == std::string_view::npos ? "" : line.substr(sp + 1));
        if (key == "seed") m.seed = std::stoull(val);
        else if (key == "start-mark") m.prep.start_mark = val;
        else if (key == "unk-threshold") m.prep.unk_threshold = std::stoi(val);
        else if (key == "quote-disambiguation") m.prep.quote_disambiguation = val == "on";
        else if (key == "abbreviation-split") m.prep.abbreviation_split = val == "on";
        else if (key == "final-mark") m.final_mark = val;
        else if (key == "correction-mode") m.correction_mode = val == "on";
        else if (key == "sym-pair") {
          auto parts = split_ws(val);
          if (parts.size() == 2) m.sym_table.pairs.emplace_back(parts[0], parts[1]);
        }
        break;
      }
      case Vocab:
        vocab_text += std::string(line);
        vocab_text += '\n';
        break;
      case Theta: {
        size_t tab = line.find('\t');
        if (tab == std::string_view::npos)
          throw std::runtime_error("bad theta line: " + std::string(line));
        int id = m.theta.intern(std::string(line.substr(0, tab)));
        m.theta.weights[size_t(id)] = std::stod(std::string(line.substr(tab + 1)));
        break;
      }
      case Phi:
        phi_lines.push_back(line);
        break;
      case None:
        break;
    }
  }

  m.vocab = read_vocab(vocab_text);
  m.rebuild_alphabet();

  for (auto line : phi_lines) {
    auto parts = split_ws(line);
    if (parts.empty()) continue;
    if (parts[0] == "direction") {
      m.channel.direction = parts.at(1) == "r2l" ? Direction::R2L : Direction::L2R;
    } else if (parts[0] == "channel") {
      m.channel.identity = parts.at(1) == "identity";
    } else {
      if (parts.size() != 6)
        throw std::runtime_error("bad phi line: " + std::string(line));
      int a = m.token_id(parts[0]), b = m.token_id(parts[1]);
      if (a < 0 || b < 0)
        throw std::runtime_error("phi token outside alphabet: " + std::string(line));
      auto& s = m.channel.at(a, b);
      for (int k = 0; k < 4; ++k) s[size_t(k)] = std::stod(parts[size_t(k) + 2]);
    }
  }
  m.pfst = std::make_unique<Pfst>(build_pfst(m.channel));
  return m;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

void write_model_file(const Model& m, const std::string& path) {
  write_text_file(path, save_model(m));
}

Model read_model_file(const std::string& path) {
  return load_model(read_text_file(path));
}

}  // namespace punct
