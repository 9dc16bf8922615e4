#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "p6_training.hpp"

namespace acceptance {

struct Context {
  P6Options p6;
  // Scratch space for criteria that write runs, datasets or checkpoints.
  std::filesystem::path work_dir;
};

struct Criterion {
  std::string id;
  std::string title;
  std::function<bool(const Context&, std::ostream& detail)> run;
};

bool p1(const Context& context, std::ostream& detail);
bool p2(const Context& context, std::ostream& detail);
bool p3(const Context& context, std::ostream& detail);
bool p4(const Context& context, std::ostream& detail);
bool p5(const Context& context, std::ostream& detail);
bool p7(const Context& context, std::ostream& detail);
bool p8(const Context& context, std::ostream& detail);

const std::vector<Criterion>& criteria();

}  // namespace acceptance
