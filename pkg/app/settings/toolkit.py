from environs import Env

env = Env()
env.read_env()

# Exhaustive enumeration is refused above this many equally likely outcomes
ENUMERATION_LIMIT = env.int("OSE_ENUMERATION_LIMIT", default=1_000_000)
# Outcomes evaluated per vectorized batch during enumeration
ENUMERATION_BATCH = env.int("OSE_ENUMERATION_BATCH", default=4096)

DEFAULT_TRIALS = env.int("OSE_DEFAULT_TRIALS", default=1000)

# Columns per counter-keyed random stream. Changing it changes every generated sketch.
COLUMN_CHUNK = 1024

DEFAULT_GROUP_SIZE = env.int("OSE_DEFAULT_GROUP_SIZE", default=4)

# Report serialization
CSV_SCHEMA_VERSION = 1
FLOAT_DIGITS = 17
