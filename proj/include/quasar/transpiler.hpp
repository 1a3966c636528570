#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "quasar/lower.hpp"
#include "quasar/reference.hpp"
#include "quasar/source.hpp"

namespace quasar {

/// Inputs declared by leading `# input NAME = VALUE` lines, VALUE in
/// canonical text.
inline std::map<std::string, Value> header_inputs(const std::string& src) {
  std::map<std::string, Value> out;
  std::istringstream in(src);
  std::string line;
  const std::string tag = "# input ";
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  std::size_t lineno = 0;
  while (std::getline(in, line) && line.rfind(tag, 0) == 0) {
    ++lineno;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw PositionedError(ErrorKind::parse, lineno, 1, "syntax-error", "input header needs NAME = VALUE");
    out[trim(line.substr(tag.size(), eq - tag.size()))] = parse_value(trim(line.substr(eq + 1)));
  }
  return out;
}

inline LowerOptions lower_options(const std::map<std::string, Value>& inputs) {
  LowerOptions opt;
  for (const auto& [name, v] : inputs) opt.inputs.push_back(name);
  return opt;
}

/// Input values in the lowered program's parameter order.
inline std::vector<Value> ordered_inputs(const Lowered& l, const std::map<std::string, Value>& inputs) {
  std::vector<Value> out;
  for (const auto& n : l.inputs) {
    auto it = inputs.find(n);
    if (it == inputs.end()) throw Error(ErrorKind::lowering, "no value for input '" + n + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace quasar
