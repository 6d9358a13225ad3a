# Benchmark series: generators, CSV ingestion and task splitting
