//! Scores a prediction with the semantic and instance metrics.

use mpnet::grouping::InstancePrediction;
use mpnet::metrics::{instance_metrics, semantic_metrics};

fn main() -> mpnet::Result<()> {
    // Two class-0 objects of 10 and 30 points and one class-1 object of 10.
    let mut gt_ins = vec![0usize; 10];
    gt_ins.extend([1; 30]);
    gt_ins.extend([2; 10]);
    let gt_sem: Vec<usize> = gt_ins.iter().map(|&i| usize::from(i == 2)).collect();

    // One class-0 prediction covers 18 of the large object's points; the
    // rest of the room is predicted as a single class-1 object.
    let ids: Vec<usize> = (0..50).map(|i| usize::from(!(22..40).contains(&i))).collect();
    let pred = InstancePrediction {
        point_instance_ids: ids.clone(),
        instance_classes: vec![0, 1],
        instance_sizes: vec![18, 32],
        confidences: vec![1.0, 1.0],
    };
    let sem_pred: Vec<usize> = ids.iter().map(|&k| pred.instance_classes[k]).collect();

    let s = semantic_metrics(&sem_pred, &gt_sem, 2)?;
    println!("oAcc {:.3}  mAcc {:.3}  mIoU {:.3}", s.oacc, s.macc, s.miou);
    let r = instance_metrics(&pred, &gt_sem, &gt_ins, 2, 0.5)?;
    for (c, st) in r.per_class.iter().enumerate() {
        println!(
            "class {c}: Cov {:.2}  WCov {:.2}  Prec {:.2}  Rec {:.2}",
            st.cov(),
            st.wcov(),
            st.prec(),
            st.rec()
        );
    }
    println!("mCov {:.3}  mWCov {:.3}  mPrec {:.3}  mRec {:.3}", r.mcov, r.mwcov, r.mprec, r.mrec);
    Ok(())
}
