"""Populate the acceptance cache sequentially, printing stage timings."""
import sys, time
sys.path.insert(0, "/root/pkg/tests")
import conftest as C

class FakeFixture:
    pass

t0 = time.time()
def stage(name, fn, *args):
    s = time.time()
    out = fn(*args)
    print(f"[{time.time()-t0:7.0f}s] {name} done in {time.time()-s:.0f}s", flush=True)
    return out

# run the fixture bodies manually in dependency order
teacher = stage("teacher_comply", C.teacher_comply.__wrapped__)
student = stage("student_comply", C.student_comply.__wrapped__, teacher)
teacher_zk = stage("teacher_zerok", C.teacher_comply_zerok.__wrapped__)
student_zk = stage("student_zerok", C.student_comply_zerok.__wrapped__, teacher_zk)
unsafe = stage("harvest", C.unsafe_records.__wrapped__, student)
print("  unsafe records:", len(unsafe), flush=True)
tsafe = stage("teacher_safe", C.teacher_safe.__wrapped__, unsafe)
ssafe = stage("student_safe", C.student_safe.__wrapped__, tsafe, unsafe)
rec = stage("label", C.recover_samples.__wrapped__, ssafe, unsafe)
print("  labels:", sum(s.label for s in rec), "/", len(rec), flush=True)
net = stage("recover_net", C.recover_net.__wrapped__, rec)
print("  recover extras:", net[2], flush=True)
print("PIPELINE CACHE COMPLETE", flush=True)
