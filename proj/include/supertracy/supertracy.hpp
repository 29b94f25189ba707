#pragma once

// Umbrella header for the full engine.

#include "supertracy/agents.hpp"
#include "supertracy/app.hpp"
#include "supertracy/cli.hpp"
#include "supertracy/compress.hpp"
#include "supertracy/csv.hpp"
#include "supertracy/data_pipeline.hpp"
#include "supertracy/embed_store.hpp"
#include "supertracy/errors.hpp"
#include "supertracy/eval_harness.hpp"
#include "supertracy/event_model.hpp"
#include "supertracy/lang.hpp"
#include "supertracy/matrix.hpp"
#include "supertracy/nl_io.hpp"
#include "supertracy/prompt_factory.hpp"
#include "supertracy/rng.hpp"
#include "supertracy/seq_model.hpp"
#include "supertracy/text.hpp"
#include "supertracy/time_util.hpp"
