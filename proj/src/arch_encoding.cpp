#include "nasoa/arch_encoding.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace nasoa {

namespace {

[[noreturn]] void fail(ParseErrorKind kind, const std::string& detail) {
  throw ParseError(kind, detail);
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

const char* op_name(OpCode op) {
  switch (op) {
    case OpCode::kConv3x3: return "conv3x3";
    case OpCode::kConv1x1: return "conv1x1";
    case OpCode::kConv3x3Group2: return "conv3x3_g2";
    case OpCode::kConv3x3Group4: return "conv3x3_g4";
    case OpCode::kConv3x3Depthwise: return "conv3x3_dw";
  }
  return "?";
}

int op_kernel(OpCode op) { return op == OpCode::kConv1x1 ? 1 : 3; }

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kMissingSeparator: return "missing '-' separator";
    case ParseErrorKind::kExtraSeparator: return "more than one '-' separator";
    case ParseErrorKind::kEmptyOperators: return "empty operator part";
    case ParseErrorKind::kBadCharacter: return "unexpected character";
    case ParseErrorKind::kEvenOperatorLength: return "operator part has even length";
    case ParseErrorKind::kTooManyOperators: return "more than 3 operators";
    case ParseErrorKind::kOpOutOfRange: return "op id out of range";
    case ParseErrorKind::kRatioOutOfRange: return "ratio id out of range";
    case ParseErrorKind::kBadSkipLength: return "skip part length not a multiple of 3";
    case ParseErrorKind::kBadSkipKind: return "skip kind must be 'a' or 'c'";
    case ParseErrorKind::kSkipOutOfRange: return "skip index out of range";
    case ParseErrorKind::kSkipReversed: return "skip indices reversed or equal";
    case ParseErrorKind::kImplicitSkip: return "explicit add skip over the full block";
    case ParseErrorKind::kDuplicateSkip: return "duplicate skip";
    case ParseErrorKind::kTooManySkips: return "more than 3 skips";
    case ParseErrorKind::kFieldCount: return "expected 3 '_'-separated fields";
    case ParseErrorKind::kBadFirstChannel: return "first channel must be a positive integer";
    case ParseErrorKind::kStageCount: return "expected exactly 4 stages";
    case ParseErrorKind::kEmptyStage: return "empty stage";
    case ParseErrorKind::kZeroMultiplier: return "block multiplier must be 1..9";
  }
  return "parse error";
}

ParseError::ParseError(ParseErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

int MacroSpec::total_blocks() const {
  int n = 0;
  for (const auto& s : stages) n += static_cast<int>(s.size());
  return n;
}

BlockSpec make_block(std::vector<OpCode> ops, std::vector<ChannelRatio> ratios,
                     std::vector<SkipSpec> skips) {
  const int n = static_cast<int>(ops.size());
  if (n == 0) fail(ParseErrorKind::kEmptyOperators, "block has no operators");
  if (n > kMaxOps) fail(ParseErrorKind::kTooManyOperators, std::to_string(n));
  for (OpCode op : ops) {
    if (static_cast<int>(op) >= kNumOps) {
      fail(ParseErrorKind::kOpOutOfRange, std::to_string(static_cast<int>(op)));
    }
  }
  if (static_cast<int>(ratios.size()) != n - 1) {
    fail(ParseErrorKind::kEvenOperatorLength, "ratio count must be ops - 1");
  }
  for (ChannelRatio r : ratios) {
    if (r.id >= kNumRatios) fail(ParseErrorKind::kRatioOutOfRange, std::to_string(r.id));
  }
  if (static_cast<int>(skips.size()) > kMaxSkips) {
    fail(ParseErrorKind::kTooManySkips, std::to_string(skips.size()));
  }
  for (const SkipSpec& s : skips) {
    if (s.from < 0 || s.to > n || s.from > n || s.to < 0) {
      fail(ParseErrorKind::kSkipOutOfRange,
           std::to_string(s.from) + "->" + std::to_string(s.to));
    }
    if (s.from >= s.to) {
      fail(ParseErrorKind::kSkipReversed, std::to_string(s.from) + "->" + std::to_string(s.to));
    }
    if (s.kind == MergeKind::kAdd && s.from == 0 && s.to == n) {
      fail(ParseErrorKind::kImplicitSkip, "a0" + std::to_string(n));
    }
  }
  std::sort(skips.begin(), skips.end(), [](const SkipSpec& a, const SkipSpec& b) {
    return std::tie(a.from, a.to, a.kind) < std::tie(b.from, b.to, b.kind);
  });
  if (std::adjacent_find(skips.begin(), skips.end()) != skips.end()) {
    fail(ParseErrorKind::kDuplicateSkip, "same endpoints and kind");
  }
  return BlockSpec{std::move(ops), std::move(ratios), std::move(skips)};
}

BlockSpec parse_block(std::string_view text) {
  const std::size_t dash = text.find('-');
  if (dash == std::string_view::npos) fail(ParseErrorKind::kMissingSeparator, std::string(text));
  if (text.find('-', dash + 1) != std::string_view::npos) {
    fail(ParseErrorKind::kExtraSeparator, std::string(text));
  }
  const std::string_view op_part = text.substr(0, dash);
  const std::string_view skip_part = text.substr(dash + 1);

  if (op_part.empty()) fail(ParseErrorKind::kEmptyOperators, std::string(text));
  for (char c : op_part) {
    if (!is_digit(c)) fail(ParseErrorKind::kBadCharacter, std::string(1, c));
  }
  std::vector<OpCode> ops;
  std::vector<ChannelRatio> ratios;
  for (std::size_t i = 0; i < op_part.size(); ++i) {
    const int v = op_part[i] - '0';
    if (i % 2 == 0) {
      if (v >= kNumOps) fail(ParseErrorKind::kOpOutOfRange, std::string(1, op_part[i]));
      ops.push_back(static_cast<OpCode>(v));
    } else {
      if (v >= kNumRatios) fail(ParseErrorKind::kRatioOutOfRange, std::string(1, op_part[i]));
      ratios.push_back(ChannelRatio{static_cast<std::uint8_t>(v)});
    }
  }
  if (op_part.size() % 2 == 0) fail(ParseErrorKind::kEvenOperatorLength, std::string(op_part));
  if (ops.size() > static_cast<std::size_t>(kMaxOps)) {
    fail(ParseErrorKind::kTooManyOperators, std::string(op_part));
  }

  if (skip_part.size() % 3 != 0) fail(ParseErrorKind::kBadSkipLength, std::string(skip_part));
  std::vector<SkipSpec> skips;
  for (std::size_t i = 0; i < skip_part.size(); i += 3) {
    const char k = skip_part[i];
    if (k != 'a' && k != 'c') fail(ParseErrorKind::kBadSkipKind, std::string(1, k));
    if (!is_digit(skip_part[i + 1]) || !is_digit(skip_part[i + 2])) {
      fail(ParseErrorKind::kBadCharacter, std::string(skip_part.substr(i, 3)));
    }
    skips.push_back(SkipSpec{k == 'a' ? MergeKind::kAdd : MergeKind::kConcat,
                             skip_part[i + 1] - '0', skip_part[i + 2] - '0'});
  }
  if (skips.size() > static_cast<std::size_t>(kMaxSkips)) {
    fail(ParseErrorKind::kTooManySkips, std::string(skip_part));
  }
  return make_block(std::move(ops), std::move(ratios), std::move(skips));
}

std::string serialize_block(const BlockSpec& b) {
  std::string out;
  for (int i = 0; i < b.num_ops(); ++i) {
    out += static_cast<char>('0' + static_cast<int>(b.ops[i]));
    if (i + 1 < b.num_ops()) out += static_cast<char>('0' + b.ratios[i].id);
  }
  out += '-';
  for (const SkipSpec& s : b.skips) {
    out += s.kind == MergeKind::kAdd ? 'a' : 'c';
    out += static_cast<char>('0' + s.from);
    out += static_cast<char>('0' + s.to);
  }
  return out;
}

MacroSpec parse_macro(std::string_view text) {
  const auto parts = split(text, '-');
  if (parts.size() != 4) fail(ParseErrorKind::kStageCount, std::string(text));
  MacroSpec m;
  for (std::size_t s = 0; s < 4; ++s) {
    if (parts[s].empty()) fail(ParseErrorKind::kEmptyStage, "stage " + std::to_string(s + 1));
    for (char c : parts[s]) {
      if (!is_digit(c)) fail(ParseErrorKind::kBadCharacter, std::string(1, c));
      if (c == '0') fail(ParseErrorKind::kZeroMultiplier, std::string(parts[s]));
      m.stages[s].push_back(c - '0');
    }
  }
  return m;
}

std::string serialize_macro(const MacroSpec& m) {
  std::string out;
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) out += '-';
    for (int v : m.stages[s]) out += static_cast<char>('0' + v);
  }
  return out;
}

ArchitectureSpec parse_architecture(std::string_view text) {
  const auto fields = split(text, '_');
  if (fields.size() != 3) fail(ParseErrorKind::kFieldCount, std::string(text));
  ArchitectureSpec a;
  a.block = parse_block(fields[0]);
  const std::string_view fc = fields[1];
  if (fc.empty() || fc.size() > 6 || !std::all_of(fc.begin(), fc.end(), is_digit)) {
    fail(ParseErrorKind::kBadFirstChannel, std::string(fc));
  }
  a.first_channel = std::stoi(std::string(fc));
  if (a.first_channel <= 0) fail(ParseErrorKind::kBadFirstChannel, std::string(fc));
  a.macro = parse_macro(fields[2]);
  return a;
}

std::string serialize_architecture(const ArchitectureSpec& a) {
  return serialize_block(a.block) + "_" + std::to_string(a.first_channel) + "_" +
         serialize_macro(a.macro);
}

MacroSpec resnet50_macro() { return parse_macro("411-2111-211111-211"); }

// ---------------------------------------------------------------------------

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kNoStrideHost: return "no_stride_host";
    case ViolationKind::kAddChannelMismatch: return "add_channel_mismatch";
    case ViolationKind::kGroupingMismatch: return "grouping_mismatch";
    case ViolationKind::kFractionalChannels: return "fractional_channels";
  }
  return "?";
}

std::optional<int> stride_host(const BlockSpec& b) {
  for (int i = 0; i < b.num_ops(); ++i) {
    if (b.ops[i] != OpCode::kConv1x1) return i;
  }
  return std::nullopt;
}

BlockChannels infer_block_channels(const BlockSpec& b, long in_channels, long out_channels) {
  const int n = b.num_ops();
  BlockChannels ch;
  ch.points.assign(n + 1, 0);
  ch.points[0] = in_channels;
  for (int k = 1; k <= n; ++k) {
    ch.op_in.push_back(ch.points[k - 1]);
    long width = out_channels;
    if (k < n) {
      const ChannelRatio r = b.ratios[k - 1];
      const long scaled = out_channels * r.numerator();
      if (scaled % r.denominator() != 0) ch.fractional = true;
      width = scaled / r.denominator();
    }
    ch.op_out.push_back(width);
    long point = width;
    for (const SkipSpec& s : b.skips) {
      if (s.to == k && s.kind == MergeKind::kConcat) point += ch.points[s.from];
    }
    ch.points[k] = point;
  }
  return ch;
}

std::vector<BlockPlan> plan_blocks(const ArchitectureSpec& a) {
  std::vector<BlockPlan> plan;
  long c = a.first_channel;
  for (int s = 0; s < 4; ++s) {
    for (std::size_t i = 0; i < a.macro.stages[s].size(); ++i) {
      BlockPlan p;
      p.stage = s + 1;
      p.index = static_cast<int>(i);
      p.in_channels = c;
      p.out_channels = c * a.macro.stages[s][i];
      p.downsample = s > 0 && i == 0;
      plan.push_back(p);
      c = p.out_channels;
    }
  }
  return plan;
}

ValidationReport validate(const ArchitectureSpec& a, const ValidityRules& rules) {
  ValidationReport report;
  const BlockSpec& b = a.block;
  const bool has_host = stride_host(b).has_value();

  for (const BlockPlan& p : plan_blocks(a)) {
    if (p.downsample && !has_host) {
      report.violations.push_back({ViolationKind::kNoStrideHost, p.stage, p.index,
                                   "stage-" + std::to_string(p.stage) +
                                       " down-sampling block has only conv1x1 operators"});
    }
    const BlockChannels ch = infer_block_channels(b, p.in_channels, p.out_channels);
    if (ch.fractional) {
      report.violations.push_back({ViolationKind::kFractionalChannels, p.stage, p.index,
                                   "ratio does not divide " + std::to_string(p.out_channels)});
      continue;
    }
    for (int k = 0; k < b.num_ops(); ++k) {
      const long cin = ch.op_in[k];
      const long cout = ch.op_out[k];
      long groups = 1;
      switch (b.ops[k]) {
        case OpCode::kConv3x3Group2: groups = 2; break;
        case OpCode::kConv3x3Group4: groups = 4; break;
        case OpCode::kConv3x3Depthwise: groups = cin; break;
        default: break;
      }
      if (cin % groups != 0 || cout % groups != 0) {
        std::ostringstream os;
        os << "op " << k + 1 << " (" << op_name(b.ops[k]) << ") " << cin << "->" << cout
           << " not divisible by groups " << groups;
        report.violations.push_back({ViolationKind::kGroupingMismatch, p.stage, p.index, os.str()});
      }
    }
    if (rules.add_merge == AddMergePolicy::kStrict) {
      for (const SkipSpec& s : b.skips) {
        if (s.kind != MergeKind::kAdd) continue;
        // Destination width is the operator output plus any concat merged before it.
        const long src = ch.points[s.from];
        const long dst = ch.op_out[s.to - 1];
        if (src != dst) {
          std::ostringstream os;
          os << "a" << s.from << s.to << ": " << src << " vs " << dst << " channels";
          report.violations.push_back(
              {ViolationKind::kAddChannelMismatch, p.stage, p.index, os.str()});
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::vector<SkipSpec> legal_skips(int num_ops) {
  std::vector<SkipSpec> out;
  for (int from = 0; from < num_ops; ++from) {
    for (int to = from + 1; to <= num_ops; ++to) {
      if (!(from == 0 && to == num_ops)) out.push_back({MergeKind::kAdd, from, to});
      out.push_back({MergeKind::kConcat, from, to});
    }
  }
  return out;
}

namespace {

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::uint64_t ipow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Enumerates canonical skip subsets recursively and counts them.
std::uint64_t count_skip_sets(const std::vector<SkipSpec>& edges, std::size_t start,
                              int remaining) {
  std::uint64_t total = 1;  // stop here
  if (remaining == 0) return total;
  for (std::size_t i = start; i < edges.size(); ++i) {
    total += count_skip_sets(edges, i + 1, remaining - 1);
  }
  return total;
}

}  // namespace

std::uint64_t count_block_space(const SpaceLimits& limits) {
  std::uint64_t total = 0;
  for (int n = std::max(1, limits.min_ops); n <= limits.max_ops; ++n) {
    const std::uint64_t op_choices =
        ipow(static_cast<std::uint64_t>(limits.num_ops), n) *
        ipow(static_cast<std::uint64_t>(limits.num_ratios), n - 1);
    std::uint64_t skip_choices = 1;
    if (limits.convention == CountConvention::kSlots) {
      const std::uint64_t pairs = binomial(n + 1, 2);
      skip_choices = ipow(pairs * limits.merge_kinds, limits.max_skips);
    } else {
      // A single merge kind means add-only.
      std::vector<SkipSpec> edges;
      for (const SkipSpec& s : legal_skips(n)) {
        if (limits.merge_kinds >= 2 || s.kind == MergeKind::kAdd) edges.push_back(s);
      }
      skip_choices = count_skip_sets(edges, 0, limits.max_skips);
    }
    total += op_choices * skip_choices;
  }
  return total;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<SkipSpec> addable_skips(const BlockSpec& b) {
  std::vector<SkipSpec> out;
  for (const SkipSpec& s : legal_skips(b.num_ops())) {
    if (std::find(b.skips.begin(), b.skips.end(), s) == b.skips.end()) out.push_back(s);
  }
  return out;
}

}  // namespace

bool applicable(const BlockSpec& b, BlockMutationKind kind) {
  switch (kind) {
    case BlockMutationKind::kReplaceOp: return b.num_ops() >= 1;
    case BlockMutationKind::kChangeRatio: return b.num_ops() >= 2;
    case BlockMutationKind::kAddSkip:
      return static_cast<int>(b.skips.size()) < kMaxSkips && !addable_skips(b).empty();
    case BlockMutationKind::kRemoveSkip: return !b.skips.empty();
    case BlockMutationKind::kModifySkip: return !b.skips.empty() && !addable_skips(b).empty();
  }
  return false;
}

BlockSpec mutate_block(const BlockSpec& b, BlockMutationKind kind, Rng& rng) {
  if (!applicable(b, kind)) throw std::invalid_argument("mutate_block: kind not applicable");
  std::vector<OpCode> ops = b.ops;
  std::vector<ChannelRatio> ratios = b.ratios;
  std::vector<SkipSpec> skips = b.skips;
  switch (kind) {
    case BlockMutationKind::kReplaceOp: {
      const std::size_t i = rng.index(ops.size());
      int v = static_cast<int>(rng.index(kNumOps - 1));
      if (v >= static_cast<int>(ops[i])) ++v;
      ops[i] = static_cast<OpCode>(v);
      break;
    }
    case BlockMutationKind::kChangeRatio: {
      const std::size_t i = rng.index(ratios.size());
      int v = static_cast<int>(rng.index(kNumRatios - 1));
      if (v >= ratios[i].id) ++v;
      ratios[i].id = static_cast<std::uint8_t>(v);
      break;
    }
    case BlockMutationKind::kAddSkip: {
      const auto cands = addable_skips(b);
      skips.push_back(cands[rng.index(cands.size())]);
      break;
    }
    case BlockMutationKind::kRemoveSkip:
      skips.erase(skips.begin() + static_cast<std::ptrdiff_t>(rng.index(skips.size())));
      break;
    case BlockMutationKind::kModifySkip: {
      const auto cands = addable_skips(b);
      skips[rng.index(skips.size())] = cands[rng.index(cands.size())];
      break;
    }
  }
  return make_block(std::move(ops), std::move(ratios), std::move(skips));
}

BlockSpec mutate_block(const BlockSpec& b, Rng& rng) {
  for (;;) {
    const auto kind = static_cast<BlockMutationKind>(rng.index(5));
    if (applicable(b, kind)) return mutate_block(b, kind, rng);
  }
}

bool applicable(const MacroSpec& m, int first_channel, MacroMutationKind kind) {
  switch (kind) {
    case MacroMutationKind::kAddOne: return m.total_blocks() < 99;
    case MacroMutationKind::kRemoveOne:
      return std::any_of(m.stages.begin(), m.stages.end(), [](const std::vector<int>& s) {
        return s.size() >= 2 && std::find(s.begin(), s.end(), 1) != s.end();
      });
    case MacroMutationKind::kSwapAdjacent:
      return std::any_of(m.stages.begin(), m.stages.end(), [](const std::vector<int>& s) {
        return std::adjacent_find(s.begin(), s.end(), std::not_equal_to<>()) != s.end();
      });
    case MacroMutationKind::kChangeFirstChannel:
      (void)first_channel;
      return true;
  }
  return false;
}

MacroMutation mutate_macro(const MacroSpec& m, int first_channel, MacroMutationKind kind,
                           Rng& rng) {
  if (!applicable(m, first_channel, kind)) {
    throw std::invalid_argument("mutate_macro: kind not applicable");
  }
  MacroMutation out{m, first_channel};
  switch (kind) {
    case MacroMutationKind::kAddOne: {
      auto& stage = out.macro.stages[rng.index(4)];
      const std::size_t pos = rng.index(stage.size() + 1);
      stage.insert(stage.begin() + static_cast<std::ptrdiff_t>(pos), 1);
      break;
    }
    case MacroMutationKind::kRemoveOne: {
      // (stage, position) pairs holding a removable '1'.
      std::vector<std::pair<int, std::size_t>> sites;
      for (int s = 0; s < 4; ++s) {
        const auto& st = out.macro.stages[s];
        if (st.size() < 2) continue;
        for (std::size_t i = 0; i < st.size(); ++i) {
          if (st[i] == 1) sites.emplace_back(s, i);
        }
      }
      const auto [s, i] = sites[rng.index(sites.size())];
      out.macro.stages[s].erase(out.macro.stages[s].begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
    case MacroMutationKind::kSwapAdjacent: {
      std::vector<std::pair<int, std::size_t>> sites;
      for (int s = 0; s < 4; ++s) {
        const auto& st = out.macro.stages[s];
        for (std::size_t i = 0; i + 1 < st.size(); ++i) {
          if (st[i] != st[i + 1]) sites.emplace_back(s, i);
        }
      }
      const auto [s, i] = sites[rng.index(sites.size())];
      std::swap(out.macro.stages[s][i], out.macro.stages[s][i + 1]);
      break;
    }
    case MacroMutationKind::kChangeFirstChannel: {
      std::vector<int> choices;
      for (int c : kFirstChannelChoices) {
        if (c != first_channel) choices.push_back(c);
      }
      out.first_channel = choices[rng.index(choices.size())];
      break;
    }
  }
  return out;
}

MacroMutation mutate_macro(const MacroSpec& m, int first_channel, Rng& rng) {
  for (;;) {
    const auto kind = static_cast<MacroMutationKind>(rng.index(4));
    if (applicable(m, first_channel, kind)) return mutate_macro(m, first_channel, kind, rng);
  }
}

BlockSpec random_block(Rng& rng) {
  const int n = rng.range(1, kMaxOps);
  std::vector<OpCode> ops;
  std::vector<ChannelRatio> ratios;
  for (int i = 0; i < n; ++i) {
    ops.push_back(static_cast<OpCode>(rng.index(kNumOps)));
    if (i + 1 < n) ratios.push_back(ChannelRatio{static_cast<std::uint8_t>(rng.index(kNumRatios))});
  }
  std::vector<SkipSpec> pool = legal_skips(n);
  const int k = rng.range(0, std::min<int>(kMaxSkips, static_cast<int>(pool.size())));
  std::vector<SkipSpec> skips;
  for (int i = 0; i < k; ++i) {
    const std::size_t j = rng.index(pool.size());
    skips.push_back(pool[j]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return make_block(std::move(ops), std::move(ratios), std::move(skips));
}

MacroMutation random_macro(Rng& rng, int min_blocks, int max_blocks) {
  static constexpr std::array<int, 3> kLastChannels{512, 1024, 2048};
  const int total = rng.range(min_blocks, max_blocks);
  const int first = kFirstChannelChoices[rng.index(kFirstChannelChoices.size())];
  const int last = kLastChannels[rng.index(kLastChannels.size())];
  int doublings = 0;
  while ((first << doublings) < last) ++doublings;
  doublings = std::min(doublings, total);

  // Stage sizes: a random composition of `total` into 4 positive parts.
  std::vector<int> cuts;
  {
    std::vector<int> pool(static_cast<std::size_t>(total - 1));
    std::iota(pool.begin(), pool.end(), 1);
    for (int i = 0; i < 3; ++i) {
      const std::size_t j = rng.index(pool.size());
      cuts.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    std::sort(cuts.begin(), cuts.end());
  }
  std::vector<int> multipliers(static_cast<std::size_t>(total), 1);
  {
    std::vector<int> pool(static_cast<std::size_t>(total));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < doublings; ++i) {
      const std::size_t j = rng.index(pool.size());
      multipliers[static_cast<std::size_t>(pool[j])] = 2;
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }
  MacroMutation out{{}, first};
  int begin = 0;
  for (int s = 0; s < 4; ++s) {
    const int end = s < 3 ? cuts[s] : total;
    out.macro.stages[s].assign(multipliers.begin() + begin, multipliers.begin() + end);
    begin = end;
  }
  return out;
}

}  // namespace nasoa
