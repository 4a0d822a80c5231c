#include <gtest/gtest.h>

#include <set>
#include <string>

#include "nasoa/arch_encoding.h"
#include "nasoa/cost_model.h"

namespace nasoa {
namespace {

ParseErrorKind block_error(const std::string& text) {
  try {
    parse_block(text);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << text << " parsed";
  return ParseErrorKind::kBadCharacter;
}

ParseErrorKind arch_error(const std::string& text) {
  try {
    parse_architecture(text);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << text << " parsed";
  return ParseErrorKind::kBadCharacter;
}

TEST(ParseBlock, BasicBlock) {
  const BlockSpec b = parse_block("020-");
  ASSERT_EQ(b.num_ops(), 2);
  EXPECT_EQ(b.ops[0], OpCode::kConv3x3);
  EXPECT_EQ(b.ops[1], OpCode::kConv3x3);
  ASSERT_EQ(b.ratios.size(), 1u);
  EXPECT_EQ(b.ratios[0].value(), 1.0);
  EXPECT_TRUE(b.skips.empty());
}

TEST(ParseBlock, ThreeOpsWithSkip) {
  const BlockSpec b = parse_block("02031-a02");
  ASSERT_EQ(b.num_ops(), 3);
  EXPECT_EQ(b.ops[2], OpCode::kConv1x1);
  EXPECT_EQ(b.ratios[0].value(), 1.0);
  EXPECT_EQ(b.ratios[1].value(), 2.0);
  ASSERT_EQ(b.skips.size(), 1u);
  EXPECT_EQ(b.skips[0], (SkipSpec{MergeKind::kAdd, 0, 2}));
}

TEST(ParseBlock, SingleOp) {
  const BlockSpec b = parse_block("2-");
  ASSERT_EQ(b.num_ops(), 1);
  EXPECT_EQ(b.ops[0], OpCode::kConv3x3Group2);
  EXPECT_TRUE(b.ratios.empty());
}

TEST(ParseBlock, RatioTable) {
  const double want[] = {0.25, 0.5, 1, 2, 4};
  for (std::uint8_t i = 0; i < 5; ++i) EXPECT_EQ(ChannelRatio{i}.value(), want[i]);
}

TEST(ParseBlock, DistinctErrors) {
  EXPECT_EQ(block_error("05-"), ParseErrorKind::kRatioOutOfRange);
  EXPECT_EQ(block_error("50-"), ParseErrorKind::kOpOutOfRange);
  EXPECT_EQ(block_error("02"), ParseErrorKind::kMissingSeparator);
  EXPECT_EQ(block_error("02-a01-"), ParseErrorKind::kExtraSeparator);
  EXPECT_EQ(block_error("-"), ParseErrorKind::kEmptyOperators);
  EXPECT_EQ(block_error("0x0-"), ParseErrorKind::kBadCharacter);
  EXPECT_EQ(block_error("02-"), ParseErrorKind::kEvenOperatorLength);
  EXPECT_EQ(block_error("0202020-"), ParseErrorKind::kTooManyOperators);
  EXPECT_EQ(block_error("020-a0"), ParseErrorKind::kBadSkipLength);
  EXPECT_EQ(block_error("020-x01"), ParseErrorKind::kBadSkipKind);
  EXPECT_EQ(block_error("020-a03"), ParseErrorKind::kSkipOutOfRange);
  EXPECT_EQ(block_error("020-a10"), ParseErrorKind::kSkipReversed);
  EXPECT_EQ(block_error("020-a11"), ParseErrorKind::kSkipReversed);
  EXPECT_EQ(block_error("020-a02"), ParseErrorKind::kImplicitSkip);
  EXPECT_EQ(block_error("020-a01a01"), ParseErrorKind::kDuplicateSkip);
  EXPECT_EQ(block_error("02020-a01a12a23c01"), ParseErrorKind::kTooManySkips);
}

TEST(ParseBlock, ConcatOverFullSpanAllowed) {
  EXPECT_NO_THROW(parse_block("020-c02"));
  EXPECT_NO_THROW(parse_block("020-a01c01"));
}

TEST(SerializeBlock, CanonicalSkipOrder) {
  EXPECT_EQ(serialize_block(parse_block("02020-c12a01")), "02020-a01c12");
  EXPECT_EQ(serialize_block(parse_block("02020-c01a01")), "02020-a01c01");
}

TEST(SerializeBlock, LengthContract) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const BlockSpec b = random_block(rng);
    const std::string s = serialize_block(b);
    const std::size_t dash = s.find('-');
    EXPECT_EQ(dash, static_cast<std::size_t>(2 * b.num_ops() - 1));
    EXPECT_EQ(s.size() - dash - 1, 3 * b.skips.size());
    EXPECT_EQ(parse_block(s), b);
  }
}

TEST(ParseArchitecture, ResNet18) {
  const ArchitectureSpec a = parse_architecture("020-_64_11-21-21-21");
  EXPECT_EQ(serialize_block(a.block), "020-");
  EXPECT_EQ(a.first_channel, 64);
  const std::array<std::vector<int>, 4> want{{{1, 1}, {2, 1}, {2, 1}, {2, 1}}};
  EXPECT_EQ(a.macro.stages, want);
}

TEST(ParseArchitecture, Errors) {
  EXPECT_EQ(arch_error("020-_64"), ParseErrorKind::kFieldCount);
  EXPECT_EQ(arch_error("020-_64_1-1-1-1_x"), ParseErrorKind::kFieldCount);
  EXPECT_EQ(arch_error("020-_0_1-1-1-1"), ParseErrorKind::kBadFirstChannel);
  EXPECT_EQ(arch_error("020-_-4_1-1-1-1"), ParseErrorKind::kBadFirstChannel);
  EXPECT_EQ(arch_error("020-_64_1-1-1"), ParseErrorKind::kStageCount);
  EXPECT_EQ(arch_error("020-_64_1-1--1"), ParseErrorKind::kEmptyStage);
  EXPECT_EQ(arch_error("020-_64_1-10-1-1"), ParseErrorKind::kZeroMultiplier);
}

TEST(ParseArchitecture, PublishedEncodingsRoundTrip) {
  std::vector<std::string> all;
  for (const auto& [name, enc] : resnet_reference()) all.emplace_back(enc);
  for (const CalibrationRow& row : et_nas_reference()) all.emplace_back(row.encoding);
  ASSERT_EQ(all.size(), 16u);
  for (const std::string& s : all) {
    const ArchitectureSpec a = parse_architecture(s);
    EXPECT_EQ(serialize_architecture(a), s);
    EXPECT_TRUE(validate(a).ok()) << s;
  }
}

TEST(Validate, NoStrideHost) {
  const ArchitectureSpec a = parse_architecture("1-_64_1-1-1-1");
  const ValidationReport r = validate(a);
  ASSERT_EQ(r.violations.size(), 3u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::kNoStrideHost);
  EXPECT_EQ(r.violations[0].stage, 2);
}

TEST(Validate, StrictAddMismatch) {
  // Operator 1 widens to 2C, so points 0 and 1 carry C and 2C.
  const ArchitectureSpec a = parse_architecture("031-a01_64_1-1-1-1");
  EXPECT_TRUE(validate(a).ok());
  const ValidationReport r = validate(a, ValidityRules::strict());
  ASSERT_FALSE(r.ok());
  for (const Violation& v : r.violations) EXPECT_EQ(v.kind, ViolationKind::kAddChannelMismatch);
}

TEST(Validate, StrictRejectsOnlyMismatchedPublishedRows) {
  std::set<std::string> failing;
  for (const CalibrationRow& row : et_nas_reference()) {
    if (!validate(parse_architecture(row.encoding), ValidityRules::strict()).ok()) {
      failing.insert(row.name);
    }
  }
  EXPECT_EQ(failing, (std::set<std::string>{"ET-NAS-I", "ET-NAS-K", "ET-NAS-L"}));
}

TEST(Validate, GroupingAndFraction) {
  // Depthwise op 1 maps 64 -> 16 channels: groups = 64 does not divide 16.
  EXPECT_FALSE(validate(parse_architecture("401-_64_1-1-1-1")).ok());
  // 1/4 of 2 channels is fractional.
  const ValidationReport r = validate(parse_architecture("000-_2_1-1-1-1"));
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.violations[0].kind, ViolationKind::kFractionalChannels);
}

TEST(InferChannels, RatiosRelativeToBlockOutput) {
  const BlockChannels ch = infer_block_channels(parse_block("10001-"), 256, 512);
  EXPECT_EQ(ch.op_in, (std::vector<long>{256, 128, 128}));
  EXPECT_EQ(ch.op_out, (std::vector<long>{128, 128, 512}));
  const BlockChannels cc = infer_block_channels(parse_block("020-c01"), 64, 64);
  EXPECT_EQ(cc.points, (std::vector<long>{64, 128, 64}));
  EXPECT_EQ(cc.op_in[1], 128);
}

TEST(StrideHost, FirstNonPointwise) {
  EXPECT_EQ(stride_host(parse_block("10001-")), 1);
  EXPECT_EQ(stride_host(parse_block("020-")), 0);
  EXPECT_FALSE(stride_host(parse_block("121-")).has_value());
}

// Independent count: parse every string over the skip alphabet and keep the
// distinct canonical forms.
std::uint64_t brute_force_space(int max_ops) {
  std::uint64_t total = 0;
  const std::string kinds = "ac";
  for (int n = 1; n <= max_ops; ++n) {
    std::vector<std::string> triplets;
    for (char k : kinds) {
      for (int f = 0; f <= 3; ++f) {
        for (int t = 0; t <= 3; ++t) triplets.push_back(std::string{k, char('0' + f), char('0' + t)});
      }
    }
    const std::string ops = n == 1 ? "0" : n == 2 ? "000" : "00000";
    std::set<std::string> skips;
    std::vector<std::string> parts{""};
    for (const auto& t1 : triplets) {
      parts.push_back(t1);
      for (const auto& t2 : triplets) {
        parts.push_back(t1 + t2);
        for (const auto& t3 : triplets) parts.push_back(t1 + t2 + t3);
      }
    }
    for (const auto& p : parts) {
      try {
        skips.insert(serialize_block(parse_block(ops + "-" + p)));
      } catch (const ParseError&) {
      }
    }
    std::uint64_t op_count = 1;
    for (int i = 0; i < 2 * n - 1; ++i) op_count *= 5;
    total += op_count * skips.size();
  }
  return total;
}

TEST(CountBlockSpace, SmallLimits) {
  SpaceLimits one;
  one.max_ops = 1;
  one.max_skips = 0;
  EXPECT_EQ(count_block_space(one), 5u);
  SpaceLimits two;
  two.min_ops = 2;
  two.max_ops = 2;
  two.max_skips = 0;
  EXPECT_EQ(count_block_space(two), 125u);
}

TEST(CountBlockSpace, CanonicalMatchesBruteForce) {
  EXPECT_EQ(count_block_space(SpaceLimits{}), brute_force_space(3));
  EXPECT_EQ(count_block_space(SpaceLimits{}), 728260u);
}

TEST(CountBlockSpace, SlotConvention) {
  SpaceLimits s;
  s.min_ops = 3;
  s.convention = CountConvention::kSlots;
  EXPECT_EQ(count_block_space(s), 5400000u);
}

TEST(CountBlockSpace, MonotoneInEachLimit) {
  const SpaceLimits base{1, 2, 3, 3, 1, 1, CountConvention::kCanonical};
  const std::uint64_t c0 = count_block_space(base);
  for (int field = 0; field < 5; ++field) {
    SpaceLimits up = base;
    switch (field) {
      case 0: up.max_ops += 1; break;
      case 1: up.num_ops += 1; break;
      case 2: up.num_ratios += 1; break;
      case 3: up.max_skips += 1; break;
      case 4: up.merge_kinds += 1; break;
    }
    EXPECT_GE(count_block_space(up), c0) << field;
  }
}

TEST(MutateBlock, ForcedReplaceOp) {
  Rng rng(1);
  const BlockSpec b = parse_block("020-");
  for (int i = 0; i < 50; ++i) {
    const BlockSpec m = mutate_block(b, BlockMutationKind::kReplaceOp, rng);
    int diffs = 0;
    for (int k = 0; k < 2; ++k) diffs += m.ops[k] != b.ops[k];
    EXPECT_EQ(diffs, 1);
    EXPECT_EQ(m.ratios, b.ratios);
  }
}

TEST(MutateBlock, ForcedAddSkip) {
  Rng rng(2);
  const std::set<std::string> legal{"020-a01", "020-a12", "020-c01", "020-c12", "020-c02"};
  std::set<std::string> seen;
  for (int i = 0; i < 200; ++i) {
    seen.insert(serialize_block(mutate_block(parse_block("020-"), BlockMutationKind::kAddSkip, rng)));
  }
  EXPECT_EQ(seen, legal);
}

TEST(MutateBlock, InapplicableKindsThrow) {
  Rng rng(0);
  EXPECT_THROW(mutate_block(parse_block("2-"), BlockMutationKind::kChangeRatio, rng),
               std::invalid_argument);
  EXPECT_THROW(mutate_block(parse_block("2-"), BlockMutationKind::kRemoveSkip, rng),
               std::invalid_argument);
}

TEST(MutateBlock, ExactlyOneEdit) {
  Rng rng(11);
  BlockSpec b = parse_block("02031-a02");
  for (int i = 0; i < 10000; ++i) {
    const BlockSpec m = mutate_block(b, rng);
    const std::string s = serialize_block(m);
    EXPECT_EQ(parse_block(s), m);
    EXPECT_NE(m, b);
    int edits = 0;
    if (m.ops.size() == b.ops.size()) {
      for (std::size_t k = 0; k < m.ops.size(); ++k) edits += m.ops[k] != b.ops[k];
      for (std::size_t k = 0; k < m.ratios.size(); ++k) edits += m.ratios[k] != b.ratios[k];
    }
    std::set<SkipSpec> sm(m.skips.begin(), m.skips.end()), sb(b.skips.begin(), b.skips.end());
    std::vector<SkipSpec> only_m, only_b;
    std::set_difference(sm.begin(), sm.end(), sb.begin(), sb.end(), std::back_inserter(only_m));
    std::set_difference(sb.begin(), sb.end(), sm.begin(), sm.end(), std::back_inserter(only_b));
    const int skip_edits = std::max(only_m.size(), only_b.size()) > 0 ? 1 : 0;
    EXPECT_EQ(edits + skip_edits, 1) << serialize_block(b) << " -> " << s;
    EXPECT_LE(only_m.size(), 1u);
    EXPECT_LE(only_b.size(), 1u);
    // validate never throws on a mutated block
    ArchitectureSpec a{m, 64, resnet50_macro()};
    (void)validate(a);
    b = m;
  }
}

TEST(MutateBlock, KindDistributionUniformOverApplicable) {
  // "2-" admits replace-op and add-skip only (c01 is its single legal skip).
  Rng rng(5);
  int replaced = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    replaced += mutate_block(parse_block("2-"), rng).skips.empty();
  }
  EXPECT_NEAR(static_cast<double>(replaced) / trials, 0.5, 0.02);
}

TEST(MutateMacro, ForcedAddOne) {
  const MacroSpec m = parse_macro("11-21-21-21");
  Rng rng(0);
  bool saw_stage1 = false;
  for (int i = 0; i < 200 && !saw_stage1; ++i) {
    const MacroMutation out = mutate_macro(m, 64, MacroMutationKind::kAddOne, rng);
    if (out.macro.stages[0].size() == 3) {
      saw_stage1 = true;
      EXPECT_EQ(serialize_macro(out.macro), "111-21-21-21");
    }
  }
  EXPECT_TRUE(saw_stage1);
}

TEST(MutateMacro, SwapAdjacent) {
  Rng rng(0);
  const MacroMutation out =
      mutate_macro(parse_macro("1-1-21-1"), 64, MacroMutationKind::kSwapAdjacent, rng);
  EXPECT_EQ(serialize_macro(out.macro), "1-1-12-1");
}

TEST(MutateMacro, RemoveOneNeedsSpareBlock) {
  const MacroSpec m = parse_macro("2-1-2-2");
  EXPECT_FALSE(applicable(m, 64, MacroMutationKind::kRemoveOne));
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const MacroMutation out = mutate_macro(m, 64, rng);
    for (const auto& s : out.macro.stages) EXPECT_GE(s.size(), 1u);
  }
}

TEST(MutateMacro, FirstChannelStaysInSet) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const MacroMutation out =
        mutate_macro(resnet50_macro(), 64, MacroMutationKind::kChangeFirstChannel, rng);
    EXPECT_TRUE(out.first_channel == 32 || out.first_channel == 128);
    EXPECT_EQ(out.macro, resnet50_macro());
  }
}

TEST(RandomMacro, BlockCountWithinBounds) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const MacroMutation m = random_macro(rng);
    EXPECT_GE(m.macro.total_blocks(), 10);
    EXPECT_LE(m.macro.total_blocks(), 50);
    for (const auto& s : m.macro.stages) EXPECT_FALSE(s.empty());
    const std::string text = serialize_macro(m.macro);
    EXPECT_EQ(parse_macro(text), m.macro);
  }
}

TEST(RandomBlock, RoundTrip) {
  Rng rng(23);
  for (int i = 0; i < 5000; ++i) {
    const BlockSpec b = random_block(rng);
    EXPECT_EQ(parse_block(serialize_block(b)), b);
  }
}

}  // namespace
}  // namespace nasoa
