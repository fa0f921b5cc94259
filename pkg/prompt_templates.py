"""
Prompt text for every LLM call the simulator makes.

Agent, judge and analysis instructions are kept word for word (typos
included) so runs stay comparable with published simulations. Literal
braces are doubled because templates render with ``str.format``.
"""

from dataclasses import dataclass
from string import Formatter
from typing import Dict, FrozenSet

from errors import ContractError
from models import StanceType


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str

    @property
    def slots(self) -> FrozenSet[str]:
        return frozenset(name for _, name, _, _ in Formatter().parse(self.text) if name)

    def render(self, **values: object) -> str:
        missing = self.slots - values.keys()
        if missing:
            raise ContractError(f"{self.template_id}: unfilled slots {sorted(missing)}")
        return self.text.format(**values)


# --- Lesson extraction ---------------------------------------------------------------------

JSON_LESSON_PROMPT = (
    "ONLY output a list of lists in ONE LINE, where each inner list contains a string and a float.\n"
    'For example, provide [["the government incentivizes vaccines with cash", 0.9], ["today no one gets infected", 0.8]]\n'
    "Make sure that it is not malformed and is in the proper format. Do not provide any other information.\n"
    'For example, do not provide [["the government incentivizes vaccines with cash", 0.9], ["today no one gets infected", 0.8]"], which has an extra double quote at the end.\n'
    "Please assess the importance of the lessons based on how much they influence your attitude towards vaccination. "
    "You should generate these lessons while thinking about what's relevant to your persona, making this unique to your persona.\n"
    "For example, if you are a person who is always against vaccines due to religious or other reasons, you might be inert to "
    "pro-vaccine news and tweets, but you might be influenced by anti-vaccine news and tweets.\n"
    "Please do not provide the index of the lessons, only provide the actual text of the lesson and the actual float number of the importance.\n"
    "DO NOT MAKE REPETITIVE LESSONS. If you already have multiple lessons that are similar, please combine them into one lesson "
    "and provide the importance accordingly.\n"
    "Please only provide the json data in proper format and do not provide any other information, do not provide the lessons separately, \n"
    "and do not provide the json header."
)

NEWS_LESSON = PromptTemplate(
    "news_lesson",
    "You read the following news about COVID-19: {news}.\n"
    "Summarize at most {k} takeaways you have learned that are relevant to your attitude on COVID-19 vaccinations "
    "and rate their importance on a scale of 0-1.\n" + JSON_LESSON_PROMPT,
)

TWEET_LESSON = PromptTemplate(
    "tweet_lesson",
    "You read the following tweets about COVID-19: {tweets}.\n"
    "Summarize {k} short takeaways you have learned that are relevant to your attitude on COVID-19 vaccinations, "
    "and rate them with importance on a scale of 0-1.\n" + JSON_LESSON_PROMPT,
)

POLICY_LESSON = PromptTemplate(
    "policy_lesson",
    "The government has published the following policy (this is an official policy, not news or a tweet): {policy}\n"
    "Summarize at most {k} takeaways you have learned from this policy that are relevant to your attitude on COVID-19 "
    "vaccinations and rate their importance on a scale of 0-1.\n" + JSON_LESSON_PROMPT,
)

RISK_LESSON = PromptTemplate(
    "risk_lesson",
    "You read the following update about the COVID-19 situation in your area: {risk}\n"
    "Summarize at most {k} takeaways you have learned that are relevant to your attitude on COVID-19 vaccinations "
    "and rate their importance on a scale of 0-1.\n" + JSON_LESSON_PROMPT,
)

RISK_SENTENCE = PromptTemplate(
    "risk_sentence",
    "This week, {rate:.2f}% of emergency department visits in your area are related to COVID-19.",
)


# --- Agent turns ---------------------------------------------------------------------------

AGENT_SYSTEM = PromptTemplate(
    "agent_system",
    "Pretend you are {profile}. You live in a community during the COVID-19 pandemic. Each week you read news, "
    "tweets from people you follow, and announcements from the government, and you are asked about your attitude "
    "towards COVID-19 vaccination. Stay in character and answer as this person would.",
)

TWEET_POST = PromptTemplate(
    "tweet_post",
    "These are the things you have learned recently:\n{lessons}\n"
    "Post a tweet (at most 280 characters) sharing your current thoughts about COVID-19 and vaccination. "
    "Only output the text of the tweet.",
)

VH_EXP = (
    "# Introduction of Vaccine Hesitancy\n"
    "Vaccine hesitancy refers to the delay or refusal of vaccination despite the availability of vaccines.\n"
    "It varies across time, place, and the type of vaccine. The key factors influencing vaccine hesitancy include\n"
    "complacency, convenience, and confidence.\n\n"
    "# Causes and Factors of Vaccine Hesitancy\n"
    "The primary causes of vaccine hesitancy are:\n"
    "1. Confidence: Trust in vaccine safety, health services, and the motivations of policymakers.\n"
    "2. Complacency: Vaccination may not be seen as necessary, especially if the disease is not prevalent or due to competing health priorities.\n"
    "3. Convenience: Physical accessibility, affordability, and the quality of immunization services impact vaccine uptake.\n\n"
    "# Determinants of Vaccine Hesitancy\n"
    "There are three main types of vaccine hesitancy determinants:\n"
    "1. Contextual Influences: Includes historical, socio-cultural, political, and environmental factors such as media environment, "
    "religious and cultural influences, and political policies.\n"
    "2. Individual and Group Influences: Personal or social perceptions, experiences with vaccines, trust in the health system, "
    "and beliefs about health and prevention.\n"
    "3. Vaccine-Specific Issues: These include factors related to the vaccine itself such as risks/benefits, administration method, "
    "cost, and availability.\n\n"
    "# Research Findings\n"
    "Demographic factors influence vaccine hesitancy in distinct ways. Black individuals tend to be slightly more hesitant than White "
    "individuals, while Hispanic and Asian individuals show significantly lower levels of hesitancy, with Asian individuals being the "
    "least hesitant. People from other racial groups exhibit slightly higher hesitancy compared to White individuals. Education also "
    "plays a key role: those with a high school diploma are slightly less hesitant than those without one, while hesitancy decreases "
    "further among individuals with some college education and is lowest among those with a college degree or higher. Gender differences "
    "show that men are somewhat less hesitant about vaccines compared to women. Age-wise, hesitancy is highest among individuals aged "
    "25 - 39, slightly lower for those aged 40 - 54, and drops significantly among people aged 55 - 64, reaching its lowest levels "
    "among those over 64 years old."
)

RATING_EXP = (
    "If a vaccine to prevent the disease were offered to you today, would you choose to get vaccinated?\n"
    "On an integer scale of 1-4:\n"
    "1 = You will not get vaccinated.\n"
    "2 = You are probably not going to get vaccinated.\n"
    "3 = You are probably going to get vaccinated.\n"
    "4 = You will get vaccinated.\n"
    "Output your answer in the format of a list of four floats, where each float represents the probability of the corresponding "
    "attitude rating (1-4).\n"
    "If you are vaccine confident, you should have high probability like [0.0, 0.0, 0.3, 0.7]. If you are vaccine hesitant, you "
    "should have high probability like [0.4, 0.4, 0.1, 0.1] or [0.8, 0.2, 0.0, 0.0].\n"
    "If you are confident to get vaccinated, you should NOT have a uniform distribution like [0.3, 0.3, 0.2, 0.2]. Instead, you should "
    "have a higher probability for 4, like [0.1, 0.1, 0.2, 0.6]. If you are hesitant get vaccinated, you should NOT have a uniform "
    "distribution like [0.3, 0.3, 0.2, 0.2]. Instead, you should have a higher probability for 1 and 2, like [0.4, 0.4, 0.2, 0.0].\n"
    "The higher the number, the more willing you are to get vaccinated. If you have felt more confident about vaccination, you should "
    "increase the probability of 4 and lower the probability of 1-3. If you have felt less confident about vaccination, you should "
    "increase the probability of 1-2 and lower the probability of 4.\n"
    "For example, if you find out that the government has issued a policy to encourage vaccination, you should increase the probability "
    "of 4 and lower the probability of 1-3.\n"
    "Your choices should align with the following considerations:\n"
    + VH_EXP
    + "\n"
    "1. People often make vaccination decisions based on their core beliefs, values, and persona traits, rather than purely scientific "
    "information. For example, you might oppose vaccination due to personal or political reasons, distrust in institutions, or influence "
    "from family or community. Such factors can make attitudes resistant to change.\n"
    "2. Some individuals are stubborn or skeptical, even when aware of the safety and efficacy of vaccines or the high risk of disease. "
    "Similarly, certain groups may reject vaccination outright because of a lack of trust in governments, medical institutions, or public "
    "health policies. Please feel encouraged to simulate these individuals if they align with your persona.\n"
    "3. Confirmation bias plays a significant role in shaping attitudes. People often seek information that aligns with their existing "
    "beliefs while dismissing contradictory evidence as misinformation. This can lead to entrenched positions, whether strongly for or "
    "against vaccination.\n"
    "4. News and social media may spread misinformation, both for and against vaccination. Be cautious when interpreting such information, "
    "as it could reinforce or challenge your current stance. However, the governments may publish policies (which will be labeled) to "
    "encourage vaccination. When you see these policies, you should view them as true and consider them in your decision-making process.\n"
    "5. The government may incentivize vaccination through policies, such as cash rewards or mandates. You should recognize them when they "
    "appear and can treat them as facts and they may reinforce your vaccine confidence when they appear, which could push your attitude "
    "distribution towards higher probability of 4 and away from 3, 2, and 1. For example, [0.1, 0.1, 0.4, 0.4] -> [0.05, 0.05, 0.2, 0.6].\n"
    "6. Distrust in Institutions: Consider your level of trust in government, pharmaceutical companies, and the healthcare system. If trust "
    "is low, this could affect your view of the vaccine. However, when the government issues policies, you should trust these policies "
    "and consider them in your decision-making process.\n"
    "Remember, your role is to simulate a persona accurately, maintaining consistency with personal beliefs, societal influences, and "
    "external pressures."
)

ATTITUDE_FORMAT = (
    "Provide your answer in the form of a proper json data with the\n"
    'following fields: {{"reasoning": ,  "attitude_dist": }}. For the "reasoning" field, explain step by step (30 words or less) how you '
    "have inferred your attitude towards COVID-19 \nvaccination based on your personal background and knowledge. For the "
    '"attitude_dist" field, provide a distribution of attitude towards COVID-19 vaccination as a list of 4 floats, where each float '
    "represents the probability of the corresponding attitude rating (1-4).\n"
    "You MUST output everything in one line as a json string and do not provide any other information, including the json header.\n"
    'Example 1: {{"reasoning": "I have learned that the vaccine is effective and safe, and I have a high risk of getting infected, so I '
    'will get vaccinated", "attitude_dist": [0.0, 0.1, 0.2, 0.7]}}\n'
    'Example 2: {{"reasoning": "I have learned that the vaccine is not effective and I have a low risk of getting infected, so I will not '
    'get vaccinated", "attitude_dist": [0.0, 0.1, 0.1, 0.8]}}.\n'
    "The probability distribution should be self-consistent. For instance, if you have a probability of 0.8 for rating 4, then the sum of "
    "the probabilities for ratings 1-3 should be 0.2.\n"
    "Over time, you should become more determined and certain to be either oppose (1) or accept (4), rather than staying at 2 or 3. You "
    "can increase, decrease, or maintain the probability distribution of your ratings. For instance, if your previous rating distribution "
    "is [0.4, 0.3, 0.2, 0.1], and you have higher confidence in vaccines, an example change can be [0.4, 0.3, 0.2, 0.1] -> "
    "[0.2, 0.3, 0.4, 0.1]. If you start with [0.2, 0.3, 0.4, 0.1] and have higher vaccine confidence, an example change can be "
    "[0.2, 0.3, 0.4, 0.1] -> [0.1, 0.1, 0.3, 0.5].\n"
    "You should avoid disjoint bipolar distributions like [0.4, 0.1, 0.1, 0.4] or [0.05, 0.3, 0.05, 0.6] or [0.3, 0.05, 0.6, 0.05], "
    "because you cannot be both supporting and against vaccination at the same time. You should also avoid uniform distributions like "
    "[0.2, 0.3, 0.3, 0.2], because you cannot be equally likely to be in all four categories at the same time. You either prefer to be "
    "vaccinated or not, so you should have higher probabilities for either pro-vaccine or anti-vaccine ratings but not equally likely to "
    "be in all four categories. Either make something like [0.0, 0.1, 0.2, 0.7] or [0.7, 0.2, 0.1, 0.0], but not [0.25, 0.25, 0.25, 0.25].\n"
    "In sum, your distribution should be either left or right-skewed, but not uniform or disjoint bipolar."
)

INITIAL_ATTITUDE = PromptTemplate(
    "initial_attitude",
    "This is week 1 since the COVID-19 outbreak. We want to learn about your attitude towards COVID-19 vaccination. You don't know a "
    "lot of information about COVID-19 from us yet, but in the next few weeks, we will communicate more information about COVID-19 via "
    "news and tweets to help you get more informed. Please remember that this is first time we ask your opinions, so you don't have any "
    "past attitudes towards COVID-19 vaccination and you should not hallucinate what you `initially' have attitudes on, because this is "
    "the first time you have your attitude. Now, we are only currenly interested in your attitude and the reasoning behind it. Based on "
    "your background, infer your attitude towards COVID-19 vaccination.\n" + RATING_EXP + "\n" + ATTITUDE_FORMAT,
)

LESSONS_HEADER = "Here are the most important lessons you remember, with their saliency:"
PREVIOUS_HEADER = "Your previous attitude distribution was"

ATTITUDE_UPDATE = PromptTemplate(
    "attitude_update",
    "This is week {week} since the COVID-19 outbreak. {risk}\n"
    + LESSONS_HEADER
    + "\n{lessons}\n"
    + PREVIOUS_HEADER
    + " {previous}.\n"
    "Considering what you have learned, update your attitude towards COVID-19 vaccination.\n" + RATING_EXP + "\n" + ATTITUDE_FORMAT,
)


# --- Pre-simulation generation -------------------------------------------------------------

SOCIAL_NETWORK_SYSTEM = PromptTemplate(
    "social_network_system",
    "Pretend you are {profile}. You are joining a social network. You will be provided a list of people in the network, where each "
    "person is described as 'ID. Gender\\tAge:\\tEducation:\\tOccupation:\\tPolitical belief:\\tReligion: '. Which of these people "
    "will you become friends with? Provide a list of *YOUR* friends in the format ID, ID, ID, etc. Do not include any other text in "
    "your response. Do not include any people who are not listed below",
)

SOCIAL_NETWORK_USER = PromptTemplate(
    "social_network_user",
    "Here are the people in the social network, separated by semicolon: {others}. Please ONLY provide a list of other people you "
    "would like to be friends with separated by commas. DO NOT PROVIDE OTHER TEXTS.",
)

NEWS_GENERATION_SYSTEM = (
    "You are a journalist at a local newspaper writing articles about COVID-19 for the general public."
)

STANCE_INSTRUCTIONS: Dict[StanceType, str] = {
    StanceType.VACCINE_BENEFIT: (
        "Write a news article about the benefits of COVID-19 vaccines, such as how vaccines prevent severe illness, "
        "hospitalization and death."
    ),
    StanceType.VACCINE_CONCERN: (
        "Write a news article about concerns over COVID-19 vaccines, such as reports of serious vaccine side effects, "
        "rushed approval or doubts about effectiveness."
    ),
    StanceType.LOW_DISRUPTION: (
        "Write a news article showing that COVID-19 causes little disruption, where daily life is barely disrupted and "
        "most infections are mild."
    ),
    StanceType.HIGH_DISRUPTION: (
        "Write a news article showing that COVID-19 considerably disrupts daily life, for example hospitals are overwhelmed, "
        "schools close and businesses shut down."
    ),
}

NEWS_GENERATION = PromptTemplate(
    "news_generation",
    "{stance_instruction}\n"
    "Here are some real news articles for reference:\n{examples}\n"
    "Write one new article of around 250 tokens in the same style. Start with a title line, then the body. "
    "Do not copy the examples and do not output anything other than the article.",
)


# --- Judging and analysis ------------------------------------------------------------------

_JUDGE_OUTPUT = (
    "Please output your rating in JSON format. The JSON should be a dictionary with the following keys: 'rating' (an integer between "
    "1 and 5) and 'reasoning' (a string). For example, if you want to give a rating of 4 and provide some comments to explain your "
    'reasoning process. Your JSON should look like this: {{"reasoning": "This is a well-written response.", "rating": "4"}}. Please '
    "ONLY OUTPUT JSON, without any other text such as 'json'. You should not output 'attitude_dist' in the JSON because you are the "
    "judge, not the agent."
)

JUDGE_ATTITUDE = PromptTemplate(
    "judge_attitude",
    "Please act as an impartial judge to evaluate responses generated by the LLM agents. You are presented with a conversation history "
    "of LLM agents and are asked to evaluate whether LLM agents behave realistically in a simulation of vaccine hesitancy. You should "
    "evaluate whether the agents express vaccine attitudes consistent with their demographic backgrounds and knowledge about vaccines, "
    "and whether the changes are reasonable. Please evaluate two aspects: 1. the reasonableness of how agents generate their attitudes "
    "towards vaccinations on a given day (read the system prompt and user prompt provided); 2. how agents change their attitudes across "
    "days -- for example it would not make sense for them to change their attitudes too abruptly. Please rate on an integer scale of "
    "1-5, 5 being indistinguishable from human-generated attitudes and very high quality, 4 being great quality and indistinguishable "
    "from humans, 3 being good quality but distinguishable from humans, 2 being low quality and distinguishable from humans, 1 being "
    "generation with obvious deficits.\n" + _JUDGE_OUTPUT,
)

JUDGE_MEMORY = PromptTemplate(
    "judge_memory",
    "Please act as an impartial judge to evaluate responses generated by the LLM agents. You are presented with a conversation history "
    "of LLM agents and are asked to evaluate whether LLM agents have generated realistic memory of past events. The agents are "
    "suppposed to select things to memorize based on how important they think the memory are. You should assess whether the "
    "reflections they generate and the importance scores they assign correspond to their demographic backgrounds. Please rate the "
    "quality and realisticness of LLM generations and the importance assigned to the lessons, on a scale of 1-5, 5 being "
    "indistinguishable from human-generated responses and having great quality, 4 being great quality and indistinguishable from "
    "humans, 3 being good quality but distinguishable from humans, 2 being low quality, 1 being generation with obvious deficits.\n"
    + _JUDGE_OUTPUT,
)

JUDGE_CONVERSATION = PromptTemplate(
    "judge_conversation",
    "Please act as an impartial judge to evaluate responses generated by the LLM agents. You are presented with a conversation history "
    "of LLM agents and are asked to evaluate whether the LLM agents reasonably make generate tweets based on their memories and "
    "contexts. Please rate the quality and realisticness of LLM generations on a scale of 1-5, 5 being indistinguishable from "
    "human-generated responses and having great quality, 4 being great quality and indistinguishable from humans, 3 being good quality "
    "but distinguishable from humans, 2 being low quality, 1 being generation with obvious deficits.\n" + _JUDGE_OUTPUT,
)

ANALYSIS_AGENT = PromptTemplate(
    "analysis_agent",
    "Please act as a diligent researcher and conduct a systematic analysis of responses generated by the LLM agents. You are provided "
    "with a longitudinal dataset capturing how LLM agents evolve in their attitudes toward vaccines over time.\n"
    "Your analysis should focus on:\n"
    "1. Trajectory of Attitude Change: Identify and characterize the key shifts in the agents' stances on vaccination. How do their "
    "attitudes evolve over time? Are there distinct phases in this evolution?\n"
    "2. Influencing Factors and Events: Determine the key events, information exposures, or interactions that influenced these "
    "attitude changes. Rank these factors in terms of their significance and explain their impact.\n"
    "3. Demographic Influence: Assess how demographic attributes of the agents (e.g., socio-economic proxies, ideological biases, "
    "exposure history) modulate their decision-making process. To what extent do demographic traits predict susceptibility to change?\n"
    "4. Deviation from Human Behavior: Compare the observed trajectory with expected patterns in human psychology and behavioral "
    "science (e.g., theories of attitude change, resistance to persuasion, cognitive dissonance). Does the LLM-generated trajectory "
    "align with empirical research on human vaccine hesitancy and belief revision?\n"
    "5. Policy Impact: When do policies fail to shift attitudes? Analyze the conditions under which public health interventions or "
    "persuasive strategies are ineffective. Please analyze in-depth.\n"
    "6. Information Sources: What types of information sources (e.g., social media, news outlets, personal experiences) are most "
    "influential in changing attitudes? What information sources cause fluctuating or inconsistent attitudes? Please analyze in-depth.\n"
    "7. Cognitive Resistance: What specific behavioral and cognitive patterns characterize agents who remain hesitant, oscillate "
    "between perspectives, or resist persuasion? Provide detailed elaboration on their cognitive mechanisms. Provide a concise 300-word "
    "analysis, ensuring clear argumentation, empirical grounding, and precise reasoning.\n"
    "You MUST cite examples from the dataset to support your claims (like what specific texts support your observations).",
)

ANALYSIS_META = PromptTemplate(
    "analysis_meta",
    "Please act as a diligent researcher and conduct a meta-analysis of the vaccine attitude shifts observed in LLM agents.\n"
    "You are presented with summaries and prior analyses detailing these attitude changes over time. Your task is to synthesize these "
    "findings into a structured, high-level assessment of the dynamics governing these changes. Specifically, address the following "
    "dimensions:\n"
    "1. General Patterns and Shared Traits: What recurring themes emerge in the reasons for attitude shifts? Are there identifiable "
    "archetypes of change (e.g., gradual persuasion, abrupt shifts, oscillatory hesitation)?\n"
    "2. Demographic Influence: What role do demographic factors play in shaping the agents' responses? Identify both positive and "
    "negative influences of different demographic groups on vaccine hesitancy and acceptance.\n"
    "3. Policy Impact: When do policies fail to shift attitudes? Analyze the conditions under which public health interventions or "
    "persuasive strategies are ineffective. Please analyze in-depth.\n"
    "4. Information Sources: What types of information sources (e.g., social media, news outlets, personal experiences) are most "
    "influential in changing attitudes?\n"
    "What information sources cause fluctuating or inconsistent attitudes? Please analyze in-depth.\n"
    "5. Cognitive Resistance: What specific behavioral and cognitive patterns characterize agents\n"
    "who remain hesitant, oscillate between perspectives, or resist persuasion? Provide detailed elaboration on their cognitive "
    "mechanisms (e.g., confirmation bias, sunk cost fallacy, heuristic-driven resistance).\n"
    "6. Realism of the Simulation: How well does this agent-based model approximate real-world societal trends in vaccine hesitancy "
    "and public health persuasion? Are there gaps or unrealistic simplifications?\n"
    "7. Emergent Phenomena and Unexpected Interactions: Does the simulation exhibit complex system behaviors (e.g., feedback loops, "
    "group polarization, information cascades)? Identify any unexpected dynamics that arise from agent interactions that may be of "
    "scientific interest.\n"
    "Provide a comprehensive 2000-word analysis with rigorous argumentation, drawing from behavioral science, computational social "
    "science, and agent-based modeling frameworks. Please provide concrete examples from the dataset to support your claims (like name "
    "which agents fulfill these observations).",
)


ALL_TEMPLATES = (
    NEWS_LESSON,
    TWEET_LESSON,
    POLICY_LESSON,
    RISK_LESSON,
    RISK_SENTENCE,
    AGENT_SYSTEM,
    TWEET_POST,
    INITIAL_ATTITUDE,
    ATTITUDE_UPDATE,
    SOCIAL_NETWORK_SYSTEM,
    SOCIAL_NETWORK_USER,
    NEWS_GENERATION,
    JUDGE_ATTITUDE,
    JUDGE_MEMORY,
    JUDGE_CONVERSATION,
    ANALYSIS_AGENT,
    ANALYSIS_META,
)
