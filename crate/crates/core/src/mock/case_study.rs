//! Replay of the worked breast-histopathology example: three experts, one
//! mediator round questioning all three, and the judge settling on A.

use base64::Engine;
use serde_json::json;

use super::script::{Script, ScriptStage};
use crate::gateway::AgentRole;
use crate::item::{ImageData, VqaItem};

pub const CASE_ITEM_ID: &str = "case-study";

pub const EXPERT_IDS: [&str; 3] = ["expert1", "expert2", "expert3"];
pub const MEDIATOR_ID: &str = "mediator";
pub const JUDGE_ID: &str = "judge";

// 1x1 PNG; the original slide is not redistributable.
const PLACEHOLDER_PNG: &str =
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk+M9QDwADhgGAWjR9awAAAABJRU5ErkJggg==";

const INITIAL: [&str; 3] = [
    "Option A: Malignant breast histopathology. The image shows a dense proliferation of atypical cells with irregular nuclei and prominent nucleoli, which is characteristic of malignant tissue in the context provided (breast). This aligns well with features typically seen in malignancies such as invasive ductal carcinoma or other forms of breast cancer under microscopic examination using hematoxylin-eosin staining technique. Other options like non-cancerous kidney, normal brain, and inflammatory bowel disease would not display these specific cellular characteristics typical for their respective tissues when viewed microscopically stained similarly.",
    "The image provided is a histological examination of breast tissue. The cells appear to be arranged in a pattern that is characteristic of breast tissue. There is no evidence of atypical or abnormal cell growth that would suggest malignancy. Given the options provided: Option A: Malignant breast histopathology - This is not supported by the image, as there are no features indicative of malignancy. Option B: Non-cancerous kidney histopathology - This is incorrect as the image is of breast tissue, not kidney tissue. Option C: Normal brain histopathology - This is incorrect as the image is of breast tissue, not brain tissue. Option D: Inflammatory bowel disease histopathology - This is incorrect as the image is of breast tissue, not bowel tissue. This is not supported by the image, as there are no features indicative of malignancy. The image appears to show normal breast tissue.",
    "The histological examination of the breast tissue reveals malignant breast histopathology, which indicates the presence of cancerous cells in the breast tissue.",
];

const QUESTIONS: [&str; 3] = [
    "I am the final authority in medical decision-making, responsible for reviewing and synthesizing all opinions from diverse medical experts. Expert 2 and Expert 3 have differing opinions on the histological examination of the breast tissue. Expert 2 does not see any features indicative of malignancy and suggests the image shows normal breast tissue, while you mentioned that the image shows a dense proliferation of atypical cells with irregular nuclei and prominent nucleoli, characteristic of malignant tissue. Could you elaborate on the specific cellular features that led you to conclude the presence of malignancy, and how these features differ from those seen in normal breast tissue?",
    "I am the final authority in medical decision-making, responsible for reviewing and synthesizing all opinions from diverse medical experts. Expert 1 and Expert 3 have concluded that the histological examination of the breast tissue reveals malignant breast histopathology, while you noted that the image appears to show normal breast tissue with no features indicative of malignancy. Could you provide a detailed explanation of the cellular structures and patterns you observed that led you to this conclusion, and how they differ from the observations made by the other experts?",
    "I am the final authority in medical decision-making, responsible for reviewing and synthesizing all opinions from diverse medical experts. Expert 2 has a different opinion, suggesting that the image shows normal breast tissue with no features indicative of malignancy, while you concluded that the histological examination reveals malignant breast histopathology. Could you provide a detailed explanation of the specific cellular features that led you to conclude the presence of malignancy, and how these features differ from those seen in normal breast tissue?",
];

const REFINED: [&str; 3] = [
    "As an expert in breast histopathology, I can provide a detailed analysis of the cellular features observed in this image that indicate malignancy. The key findings include: 1) Dense proliferation: There is a dense and disorganized growth pattern of cells throughout the tissue section. 2) Atypical cell morphology: The tumor cells exhibit significant variations in size (pleomorphism), shape, and nuclear characteristics compared to normal breast epithelial cells. 3) Prominent nucleoli: Many nuclei appear enlarged with prominent nucleoli, which are indicative of increased protein synthesis required for rapid cell division. 4) Irregular nuclear contours: Some nuclei have irregular or indented borders instead of smooth outlines seen in benign cells. 5) Increased mitotic activity: An elevated number of dividing cells (mitoses) suggests uncontrolled cell proliferation typical of malignant tumors. 6) Loss of architectural organization: Unlike normal ductal structures found in non-cancerous breast tissue, these atypical cells lack any recognizable glandular patterns or organized architecture.  These cellular abnormalities collectively point towards a diagnosis of invasive carcinoma rather than normal breast parenchyma or inflammatory processes like those seen in inflammatory bowel disease. While some benign lesions may also display mild cytological changes, the degree of pleomorphism, high mitotic rate, loss of differentiation, and overall disorganization strongly suggest a malignant neoplastic process consistent with Option A - Malignant breast histopathology.",
    "The histological image you provided shows a tissue section stained with hematoxylin and eosin (H&E), which is a common staining method used in histopathology. The image reveals a dense cellular structure with a high cellularity, and the nuclei appear to be large and pleomorphic, which are characteristics often associated with malignancy. The presence of mitotic figures (cells in the process of dividing) is also a strong indicator of malignancy. The cellular structures and patterns in the image are consistent with those seen in breast cancer, particularly in invasive ductal carcinoma, which is the most common type of breast cancer. The nuclei are large, irregular, and have prominent nucleoli, which are features that are not typically seen in normal breast tissue. Additionally, the presence of a high number of mitotic figures and the overall appearance of the tissue are indicative of a neoplastic process. The other experts noted that the image does not show features indicative of malignancy, which could be due to the fact that the image may not be at a high enough magnification to clearly visualize the mitotic figures and other key features of malignancy. It is also possible that the tissue sample may not be representative of the entire breast, and a different section of the tissue could show more definitive signs of malignancy. In conclusion, based on the cellular structures and patterns observed in the image, the histological examination of the breast tissue is more consistent with malignant breast histopathology. The other experts may have missed some key features due to the magnification or the section of the tissue they examined. It is important to note that a definitive diagnosis of breast cancer requires a comprehensive evaluation by a pathologist, including a review of the entire tissue sample and possibly additional tests such as immunohistochemistry and molecular profiling.",
    "I apologize for the confusion, but I cannot provide specific details about the cellular features that led to the conclusion of malignancy without referring to the actual image. However, I can provide some general information about the differences between normal breast tissue and malignant breast tissue. Normal breast tissue typically consists of glandular structures, ducts, and stroma (connective tissue). The cells in normal breast tissue are arranged in a specific pattern, and they appear uniform and well-organized. In contrast, malignant breast tissue may show abnormal cell growth, irregular cell shapes, and disorganized cell arrangement. These changes can be indicative of a malignant process, such as cancer. It is important to note that a definitive diagnosis of malignancy requires a thorough examination of the tissue by a pathologist, who will consider the patient's clinical history, symptoms, and other diagnostic tests. I believe that the histological examination reveals malignant breast histopathology.",
];

const JUDGMENT: &str = "<answer> Option: A) Malignant breast histopathology </answer>Based on the detailed analysis provided by Expert 1 and the subsequent clarifications, the histological examination of the breast tissue reveals malignant breast histopathology. The key cellular features observed, such as dense proliferation, atypical cell morphology, prominent nucleoli, irregular nuclear contours, increased mitotic activity, and loss of architectural organization, strongly suggest a malignant neoplastic process. While Expert 2 initially suggested normal breast tissue, the consensus from the detailed analysis aligns with the presence of malignancy.";

/// The item and the five agent scripts of the worked example.
#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub item: VqaItem,
    pub experts: Vec<Script>,
    pub mediator: Script,
    pub judge: Script,
}

impl CaseStudy {
    pub fn all_scripts(&self) -> Vec<Script> {
        let mut v = self.experts.clone();
        v.push(self.mediator.clone());
        v.push(self.judge.clone());
        v
    }

    pub fn initial_response(expert: usize) -> &'static str {
        INITIAL[expert - 1]
    }

    pub fn mediator_question(expert: usize) -> &'static str {
        QUESTIONS[expert - 1]
    }

    pub fn refined_response(expert: usize) -> &'static str {
        REFINED[expert - 1]
    }

    /// The mediator's questions wrapped into the JSON decision schema.
    pub fn mediator_output() -> String {
        let decision = json!([{
            "Decision": "Yes",
            "Expert 1": QUESTIONS[0],
            "Expert 2": QUESTIONS[1],
            "Expert 3": QUESTIONS[2],
        }]);
        serde_json::to_string_pretty(&decision).expect("decision serializes")
    }

    pub fn judgment() -> &'static str {
        JUDGMENT
    }
}

pub fn case_study_fixture() -> CaseStudy {
    let png = base64::engine::general_purpose::STANDARD
        .decode(PLACEHOLDER_PNG)
        .expect("placeholder png decodes");
    let item = VqaItem::new(
        CASE_ITEM_ID,
        "What does this histological examination of breast tissue reveal?",
        [
            "Malignant breast histopathology",
            "Non-cancerous kidney histopathology",
            "Normal brain histopathology",
            "Inflammatory bowel disease histopathology",
        ],
    )
    .and_then(|i| i.with_gold('A'))
    .expect("case item is valid")
    .with_image(ImageData::new("image/png", png))
    .with_modality("Mic");

    let experts = EXPERT_IDS
        .iter()
        .enumerate()
        .map(|(i, id)| {
            Script::new(*id, AgentRole::Expert, "I am unable to determine the answer.")
                .respond(CASE_ITEM_ID, ScriptStage::Initial, INITIAL[i])
                .respond(CASE_ITEM_ID, ScriptStage::Feedback, REFINED[i])
        })
        .collect();
    let mediator = Script::new(MEDIATOR_ID, AgentRole::Mediator, r#"[{"Decision": "No"}]"#)
        .respond(CASE_ITEM_ID, ScriptStage::Any, CaseStudy::mediator_output());
    let judge = Script::new(JUDGE_ID, AgentRole::Judge, "<answer> option: A </answer>")
        .respond(CASE_ITEM_ID, ScriptStage::Any, JUDGMENT);
    CaseStudy { item, experts, mediator, judge }
}
