from raimipy import CoverSpec, Intervals, PartitionHandle, SearchConfig, SphereSpec, run_pipeline
import time

spec = SphereSpec(3)
cover = CoverSpec.from_texts(["sector[0,0.5)", "sector[0.5,1)"], spec)
handle = PartitionHandle(spec, Intervals(2))

start = time.time()
result = run_pipeline(cover, handle, seed=1, grid=256, search_cfg=SearchConfig(certify_samples=50_000))
print(f"elapsed: {time.time()-start} seconds")

report = result.report
print(report.outcome, report.chosen_m, report.chosen_theta0)
for i, estimate in enumerate(report.intersections, start=1):
    print(f"class {i}: {estimate.mean:.4f} +/- {estimate.std_err:.4f}")

print("flagged cells:", result.index.flagged_cells)
