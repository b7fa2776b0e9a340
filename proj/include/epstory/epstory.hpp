#pragma once

// Everything: telemetry parsing, story compilation, windowing, embeddings,
// models, evaluation, the synthetic generator and the on-disk pipeline.

#include "epstory/classify.hpp"
#include "epstory/datagen.hpp"
#include "epstory/embedding.hpp"
#include "epstory/error.hpp"
#include "epstory/eval.hpp"
#include "epstory/fileio.hpp"
#include "epstory/filter_rules.hpp"
#include "epstory/pipeline.hpp"
#include "epstory/remote_embedding.hpp"
#include "epstory/story.hpp"
#include "epstory/telemetry.hpp"
#include "epstory/windowing.hpp"
