#pragma once

#include "coala/admm.hpp"
#include "coala/convex_program.hpp"
#include "coala/core.hpp"
#include "coala/feature_store.hpp"
#include "coala/finetune.hpp"
#include "coala/guided_scoring.hpp"
#include "coala/model_io.hpp"
#include "coala/patterns.hpp"
#include "coala/pcg.hpp"
#include "coala/pipeline.hpp"
#include "coala/preference_extraction.hpp"
#include "coala/recovery.hpp"
#include "coala/synthetic.hpp"
