#include <gtest/gtest.h>

#include "xlfnd/common.hpp"
#include "xlfnd/corpus.hpp"
#include "xlfnd/corpus_io.hpp"
#include "xlfnd/credibility.hpp"
#include "xlfnd/embedding.hpp"
#include "xlfnd/model.hpp"
#include "xlfnd/optim.hpp"
#include "xlfnd/source_extract.hpp"
#include "xlfnd/synthetic.hpp"
#include "xlfnd/training.hpp"
#include "xlfnd/pipeline.hpp"
#include "xlfnd/eval.hpp"
#include "xlfnd/checkpoint.hpp"
#include "xlfnd/config.hpp"

TEST(Common, DeriveSeedDependsOnName) {
  EXPECT_NE(xlfnd::derive_seed(1, "a"), xlfnd::derive_seed(1, "b"));
  EXPECT_EQ(xlfnd::derive_seed(7, "x"), xlfnd::derive_seed(7, "x"));
}
